#include "dtlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "dtlab/errors.hpp"

namespace dtlab {

void Checkpoint::add(std::string name, Tensor value) {
    if (contains(name)) throw FormatError("checkpoint: duplicate entry '" + name + "'");
    entries.emplace_back(std::move(name), std::move(value));
}

bool Checkpoint::contains(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.first == name) return true;
    }
    return false;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.first == name) return e.second;
    }
    throw IndexError("checkpoint has no entry '" + name + "'");
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    void need(std::size_t n, const std::string& what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError("checkpoint: truncated " + what + " at offset " + std::to_string(pos_));
        }
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    std::string_view take(std::size_t n, const std::string& what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const std::string& what) {
    if (v > 0xFFFFFFFFu) throw FormatError("checkpoint: " + what + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::set<std::string> names;
    std::string out(kCheckpointMagic, 8);
    put_u32(out, checked_u32(ckpt.entries.size(), "entry count"));
    for (const auto& [name, t] : ckpt.entries) {
        if (!names.insert(name).second) throw FormatError("checkpoint: duplicate entry '" + name + "'");
        put_u32(out, checked_u32(name.size(), "name length of '" + name + "'"));
        out += name;
        put_u32(out, checked_u32(t.ndim(), "rank of '" + name + "'"));
        for (std::size_t d : t.shape()) put_u32(out, checked_u32(d, "extent of '" + name + "'"));
        const auto data = t.data();
        out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
    }
    put_u32(out, checked_u32(ckpt.metadata.size(), "metadata length"));
    out += ckpt.metadata;
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    const auto magic = in.take(8, "magic");
    if (magic != std::string_view(kCheckpointMagic, 8)) {
        throw FormatError("checkpoint: bad magic at offset 0 (expected CWARP001)");
    }
    const std::uint32_t count = in.u32("entry count");
    Checkpoint ckpt;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::string label = "entry " + std::to_string(e);
        const std::uint32_t name_len = in.u32(label + " name length");
        std::string name(in.take(name_len, label + " name"));
        const std::string where = "entry '" + name + "'";
        const std::uint32_t ndim = in.u32(where + " rank");
        Shape shape(ndim);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = in.u32(where + " shape");
            if (d == 0) throw FormatError("checkpoint: " + where + " has a zero extent");
            if (numel > (std::size_t{1} << 40) / d) throw FormatError("checkpoint: " + where + " is implausibly large");
            numel *= d;
        }
        const auto raw = in.take(numel * sizeof(double), where + " data");
        std::vector<double> values(numel);
        std::memcpy(values.data(), raw.data(), raw.size());
        if (ckpt.contains(name)) throw FormatError("checkpoint: duplicate " + where);
        ckpt.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    const std::uint32_t meta_len = in.u32("metadata length");
    ckpt.metadata = std::string(in.take(meta_len, "metadata"));
    if (!in.done()) throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(in.pos()));
    return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << f.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace dtlab
