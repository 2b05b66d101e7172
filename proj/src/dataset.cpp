#include "dtlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "dtlab/errors.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::Toy2D: return "toy2d";
        case DatasetKind::IdxImages: return "idx";
        case DatasetKind::Shapes: return "shapes";
    }
    return "unknown";
}

const Shape& Dataset::sample_shape() const {
    if (samples.empty()) throw ContractError("empty dataset has no sample shape");
    return samples.front().shape();
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    std::vector<Tensor> items;
    items.reserve(indices.size());
    for (auto i : indices) items.push_back(samples.at(i));
    return stack(items);
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels.at(i));
    return out;
}

Dataset Dataset::head(std::size_t n) const {
    Dataset d = *this;
    n = std::min(n, size());
    d.samples.resize(n);
    d.labels.resize(n);
    return d;
}

Dataset Dataset::with_label(int label) const {
    Dataset d = *this;
    d.samples.clear();
    d.labels.clear();
    for (std::size_t i = 0; i < size(); ++i) {
        if (labels[i] == label) {
            d.samples.push_back(samples[i]);
            d.labels.push_back(labels[i]);
        }
    }
    return d;
}

void Dataset::validate() const {
    if (samples.size() != labels.size()) throw ContractError("dataset: sample and label counts differ");
    for (std::size_t i = 0; i < size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw IndexError("dataset: label " + std::to_string(labels[i]) + " out of range");
        }
        for (double v : samples[i].data()) {
            if (!(v >= 0.0 && v <= 1.0)) throw DomainError("dataset: sample value outside [0,1]");
        }
    }
}

Dataset gen_toy_dataset(std::size_t n_per_class, std::uint64_t seed, ToyLayout layout) {
    if (n_per_class < 1) throw DomainError("gen_toy_dataset: need at least one sample per class");
    Rng rng(seed);
    Dataset d;
    d.kind = DatasetKind::Toy2D;
    d.num_classes = 2;
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (int label = 0; label < 2; ++label) {
            double u = 0.0;
            double v = 0.0;
            if (layout == ToyLayout::Ring) {
                const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double r = label == 0 ? 0.08 * std::sqrt(rng.uniform(0.0, 1.0)) : rng.uniform(0.20, 0.27);
                u = 0.5 + r * std::cos(angle);
                v = 0.5 + r * std::sin(angle);
            } else {
                const double c = label == 0 ? 0.35 : 0.65;
                u = std::clamp(rng.normal(c, 0.05), 0.0, 1.0);
                v = std::clamp(rng.normal(c, 0.05), 0.0, 1.0);
            }
            d.samples.push_back(Tensor({2}, std::vector<double>{u, v}));
            d.labels.push_back(label);
        }
    }
    return d;
}

namespace {

bool inside_shape(int cls, double px, double py, double cx, double cy, double r) {
    const double dx = px - cx;
    const double dy = py - cy;
    switch (cls) {
        case 0:
            return std::abs(dx) <= r && std::abs(dy) <= r;
        case 1:
            return dx * dx + dy * dy <= r * r;
        default: {
            // Upward isosceles triangle inscribed in the same box.
            if (dy > r || dy < -r) return false;
            const double half_width = r * (dy + r) / (2.0 * r);
            return std::abs(dx) <= half_width;
        }
    }
}

}  // namespace

Dataset gen_shapes_dataset(std::size_t n, std::size_t size, std::uint64_t seed, Split split) {
    if (size < 16) throw DomainError("gen_shapes_dataset: image size must be >= 16");
    if (n < 1) throw DomainError("gen_shapes_dataset: need at least one image");
    Rng rng(seed);
    Dataset d;
    d.kind = DatasetKind::Shapes;
    d.num_classes = 3;
    d.split = split;
    const auto s = static_cast<double>(size);
    constexpr int kSuper = 4;
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 3);
        const double r = rng.uniform(0.18, 0.30) * s;
        const double cx = rng.uniform(r + 1.0, s - r - 1.0);
        const double cy = rng.uniform(r + 1.0, s - r - 1.0);
        const double background = rng.uniform(0.2, 0.6);
        const double contrast = rng.uniform(0.15, 0.35) * (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0);
        Tensor img({1, size, size});
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                int hits = 0;
                for (int a = 0; a < kSuper; ++a) {
                    for (int b = 0; b < kSuper; ++b) {
                        const double px = static_cast<double>(x) + (b + 0.5) / kSuper;
                        const double py = static_cast<double>(y) + (a + 0.5) / kSuper;
                        hits += inside_shape(cls, px, py, cx, cy, r) ? 1 : 0;
                    }
                }
                const double cover = static_cast<double>(hits) / (kSuper * kSuper);
                const double v = background + contrast * cover + rng.normal(0.0, 0.03);
                img[y * size + x] = std::clamp(v, 0.0, 1.0);
            }
        }
        d.samples.push_back(std::move(img));
        d.labels.push_back(cls);
    }
    return d;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open '" + p.string() + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
    if (off + 4 > b.size()) {
        throw FormatError(what + ": truncated header at offset " + std::to_string(off));
    }
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

}  // namespace

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t limit, Split split) {
    const auto ib = read_file(images);
    const auto lb = read_file(labels);
    const std::string iname = "IDX images '" + images.string() + "'";
    const std::string lname = "IDX labels '" + labels.string() + "'";
    const std::uint32_t imagic = read_be32(ib, 0, iname);
    if (imagic != 0x00000803u) {
        throw FormatError(iname + ": bad magic 0x" + std::to_string(imagic) + " at offset 0");
    }
    const std::uint32_t lmagic = read_be32(lb, 0, lname);
    if (lmagic != 0x00000801u) {
        throw FormatError(lname + ": bad magic 0x" + std::to_string(lmagic) + " at offset 0");
    }
    const std::size_t n = read_be32(ib, 4, iname);
    const std::size_t rows = read_be32(ib, 8, iname);
    const std::size_t cols = read_be32(ib, 12, iname);
    const std::size_t nl = read_be32(lb, 4, lname);
    if (n != nl) {
        throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) +
                          " labels");
    }
    if (rows == 0 || cols == 0) throw FormatError(iname + ": zero image dimension at offset 8");
    const std::size_t count = std::min(n, limit);
    const std::size_t plane = rows * cols;
    if (ib.size() < 16 + count * plane) {
        throw FormatError(iname + ": truncated pixel data at offset " + std::to_string(ib.size()));
    }
    if (lb.size() < 8 + count) {
        throw FormatError(lname + ": truncated label data at offset " + std::to_string(lb.size()));
    }
    Dataset d;
    d.kind = DatasetKind::IdxImages;
    d.split = split;
    int max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        Tensor img({1, rows, cols});
        for (std::size_t p = 0; p < plane; ++p) img[p] = static_cast<double>(ib[16 + i * plane + p]) / 255.0;
        d.samples.push_back(std::move(img));
        d.labels.push_back(lb[8 + i]);
        max_label = std::max(max_label, static_cast<int>(lb[8 + i]));
    }
    d.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
    return d;
}

}  // namespace dtlab
