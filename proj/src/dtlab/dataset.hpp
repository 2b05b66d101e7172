#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dtlab/attacks.hpp"

namespace dtlab {

enum class DatasetKind { Toy2D, IdxImages, Shapes };

std::string to_string(DatasetKind kind);

// Labelled samples with values in [0, 1].
struct Dataset {
    DatasetKind kind = DatasetKind::Toy2D;
    std::vector<Tensor> samples;
    std::vector<int> labels;
    Split split = Split::Train;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return samples.size(); }
    const Shape& sample_shape() const;
    Tensor batch(std::span<const std::size_t> indices) const;
    std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
    // First n samples (all of them if n exceeds the size).
    Dataset head(std::size_t n) const;
    Dataset with_label(int label) const;
    void validate() const;
};

enum class ToyLayout { Ring, Gaussians };

// Two classes in [0,1]^2: class 0 is an inner blob, class 1 a surrounding
// ring (Ring), or two diagonal Gaussian clusters (Gaussians).
Dataset gen_toy_dataset(std::size_t n_per_class, std::uint64_t seed, ToyLayout layout = ToyLayout::Ring);

// Three-class grayscale images (square, disc, triangle) of size x size,
// class = index mod 3.
Dataset gen_shapes_dataset(std::size_t n, std::size_t size, std::uint64_t seed, Split split = Split::Train);

// MNIST-style IDX pair (0x00000803 images, 0x00000801 labels), scaled to [0,1].
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t limit, Split split = Split::Train);

}  // namespace dtlab
