#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "scale/matrix.hpp"
#include "scale/rng.hpp"

namespace scale {

struct LabeledDataset {
    Matrix samples;
    std::vector<int> labels;

    std::size_t size() const { return samples.rows; }
    std::size_t dim() const { return samples.cols; }
    int num_classes() const;
};

enum class StreamKind { iid, seq, seq_bl, seq_im, seq_cc };

StreamKind stream_kind_from_string(const std::string& name);
std::string to_string(StreamKind kind);

struct StreamSpec {
    StreamKind kind = StreamKind::seq;
    std::size_t num_classes = 4;      // T
    std::size_t per_class = 800;      // U
    std::size_t batch_size = 32;      // n
    std::uint64_t seed = 1;
};

// One training batch plus hidden class provenance. The provenance feeds
// evaluation, diagnostics and the oracle memory policy only.
struct StreamBatch {
    Matrix samples;
    std::vector<int> provenance;
};

enum class AugmentMode { vector_jitter, grayscale_image, rgb_image };

AugmentMode augment_mode_from_string(const std::string& name);
std::string to_string(AugmentMode mode);

struct Augmenter {
    AugmentMode mode = AugmentMode::vector_jitter;
    // vector mode
    double noise_sigma = 0.1;
    double scale_min = 0.8;
    double scale_max = 1.2;
    // image modes; images are h*w (grayscale) or 3*h*w channel-major (rgb)
    std::size_t image_height = 0;
    std::size_t image_width = 0;
    std::size_t crop_padding = 4;
    double flip_prob = 0.5;
    double brightness_min = 0.6;
    double brightness_max = 1.4;
    double contrast_min = 0.6;
    double contrast_max = 1.4;
    double grayscale_prob = 0.2;  // rgb mode only

    void validate() const;
};

// T isotropic unit-variance Gaussian clusters with labels. Means sit on a
// scaled simplex when T <= dim (all pairwise mean distances = separation),
// otherwise equally spaced on a circle in the first two dims with adjacent
// mean distance = separation.
LabeledDataset gen_gaussian_mixture(std::size_t T, std::size_t U, std::size_t dim,
                                    double separation, RngState& rng);

// IDX (big-endian magic + dims + unsigned bytes), pixels scaled to [0, 1].
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary: 3073-byte records (label byte + 3072 channel-major
// pixels), scaled to [0, 1].
LabeledDataset load_cifar10_bin(const std::vector<std::string>& paths);

// Flat dataset file: magic "SCDS", u32 format version, u64 count, u64 dim,
// count*dim little-endian doubles, then count u32 labels.
void save_flat_dataset(const LabeledDataset& data, const std::string& path);
LabeledDataset load_flat_dataset(const std::string& path);

// Split per class into a stream pool of exactly per_class samples and an
// eval slice of eval_per_class samples (disjoint, order randomized).
void split_train_eval(const LabeledDataset& data, std::size_t num_classes,
                      std::size_t per_class, std::size_t eval_per_class, RngState& rng,
                      LabeledDataset& train_pool, LabeledDataset& eval_out);

// Single-pass stream construction per the five kinds. Every drawn sample is
// emitted exactly once.
std::vector<StreamBatch> build_stream(const LabeledDataset& data, const StreamSpec& spec,
                                      RngState& rng);

// Two independently augmented views per input row, interleaved: views of
// row k land at rows 2k and 2k+1.
Matrix augment_two_views(const Matrix& batch, const Augmenter& aug, RngState& rng);

}  // namespace scale
