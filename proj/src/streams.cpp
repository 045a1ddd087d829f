#include "scale/streams.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace scale {

int LabeledDataset::num_classes() const {
    int mx = -1;
    for (int y : labels) mx = std::max(mx, y);
    return mx + 1;
}

StreamKind stream_kind_from_string(const std::string& name) {
    if (name == "iid") return StreamKind::iid;
    if (name == "seq") return StreamKind::seq;
    if (name == "seq-bl") return StreamKind::seq_bl;
    if (name == "seq-im") return StreamKind::seq_im;
    if (name == "seq-cc") return StreamKind::seq_cc;
    throw std::invalid_argument("unknown stream kind: " + name);
}

std::string to_string(StreamKind kind) {
    switch (kind) {
        case StreamKind::iid: return "iid";
        case StreamKind::seq: return "seq";
        case StreamKind::seq_bl: return "seq-bl";
        case StreamKind::seq_im: return "seq-im";
        case StreamKind::seq_cc: return "seq-cc";
    }
    return "?";
}

AugmentMode augment_mode_from_string(const std::string& name) {
    if (name == "vector_jitter") return AugmentMode::vector_jitter;
    if (name == "grayscale_image") return AugmentMode::grayscale_image;
    if (name == "rgb_image") return AugmentMode::rgb_image;
    throw std::invalid_argument("unknown augment mode: " + name);
}

std::string to_string(AugmentMode mode) {
    switch (mode) {
        case AugmentMode::vector_jitter: return "vector_jitter";
        case AugmentMode::grayscale_image: return "grayscale_image";
        case AugmentMode::rgb_image: return "rgb_image";
    }
    return "?";
}

void Augmenter::validate() const {
    if (noise_sigma < 0.0) throw std::invalid_argument("Augmenter: noise_sigma must be >= 0");
    if (scale_min > scale_max) throw std::invalid_argument("Augmenter: scale range inverted");
    if (flip_prob < 0.0 || flip_prob > 1.0)
        throw std::invalid_argument("Augmenter: flip_prob must lie in [0, 1]");
    if (grayscale_prob < 0.0 || grayscale_prob > 1.0)
        throw std::invalid_argument("Augmenter: grayscale_prob must lie in [0, 1]");
    if (brightness_min > brightness_max || contrast_min > contrast_max)
        throw std::invalid_argument("Augmenter: jitter range inverted");
    if (mode != AugmentMode::vector_jitter && (image_height == 0 || image_width == 0))
        throw std::invalid_argument("Augmenter: image modes need image dimensions");
}

LabeledDataset gen_gaussian_mixture(std::size_t T, std::size_t U, std::size_t dim,
                                    double separation, RngState& rng) {
    if (T == 0 || U == 0 || dim == 0)
        throw std::invalid_argument("gen_gaussian_mixture: T, U and dim must be positive");
    if (separation <= 0.0)
        throw std::invalid_argument("gen_gaussian_mixture: separation must be positive");

    Matrix means(T, dim);
    if (T <= dim) {
        // Scaled basis vectors: all pairwise distances equal separation.
        double r = separation / std::sqrt(2.0);
        for (std::size_t t = 0; t < T; ++t) means.at(t, t) = r;
    } else if (dim >= 2) {
        // Circle in the first two dims, adjacent chord = separation.
        double radius = T == 1 ? 0.0
                               : separation / (2.0 * std::sin(std::numbers::pi /
                                                              static_cast<double>(T)));
        for (std::size_t t = 0; t < T; ++t) {
            double angle = 2.0 * std::numbers::pi * static_cast<double>(t) /
                           static_cast<double>(T);
            means.at(t, 0) = radius * std::cos(angle);
            means.at(t, 1) = radius * std::sin(angle);
        }
    } else {
        for (std::size_t t = 0; t < T; ++t)
            means.at(t, 0) = separation * static_cast<double>(t);
    }

    LabeledDataset data;
    data.samples = Matrix(T * U, dim);
    data.labels.resize(T * U);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t u = 0; u < U; ++u) {
            std::size_t row = t * U + u;
            double* dst = data.samples.row_ptr(row);
            const double* mean = means.row_ptr(t);
            for (std::size_t j = 0; j < dim; ++j) dst[j] = mean[j] + rng.next_normal();
            data.labels[row] = static_cast<int>(t);
        }
    return data;
}

namespace {

std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("truncated file: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<unsigned char> read_bytes_exact(std::istream& is, std::size_t n,
                                            const std::string& path) {
    std::vector<unsigned char> buf(n);
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
        throw std::runtime_error("truncated file: " + path);
    return buf;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("cannot open " + images_path);
    std::uint32_t magic = read_be_u32(imgs, images_path);
    if (magic != 0x00000803)
        throw std::runtime_error("bad IDX image magic in " + images_path);
    std::uint32_t count = read_be_u32(imgs, images_path);
    std::uint32_t rows = read_be_u32(imgs, images_path);
    std::uint32_t cols = read_be_u32(imgs, images_path);
    auto pixels = read_bytes_exact(imgs, std::size_t(count) * rows * cols, images_path);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("cannot open " + labels_path);
    std::uint32_t lmagic = read_be_u32(labs, labels_path);
    if (lmagic != 0x00000801)
        throw std::runtime_error("bad IDX label magic in " + labels_path);
    std::uint32_t lcount = read_be_u32(labs, labels_path);
    if (lcount != count)
        throw std::runtime_error("IDX image/label count mismatch: " + images_path);
    auto raw_labels = read_bytes_exact(labs, lcount, labels_path);

    LabeledDataset data;
    data.samples = Matrix(count, std::size_t(rows) * cols);
    for (std::size_t k = 0; k < data.samples.data.size(); ++k)
        data.samples.data[k] = static_cast<double>(pixels[k]) / 255.0;
    data.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) data.labels[i] = raw_labels[i];
    return data;
}

LabeledDataset load_cifar10_bin(const std::vector<std::string>& paths) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kPixels = 3072;
    LabeledDataset data;
    std::vector<double> all;
    for (const auto& path : paths) {
        std::ifstream is(path, std::ios::binary | std::ios::ate);
        if (!is) throw std::runtime_error("cannot open " + path);
        std::size_t bytes = static_cast<std::size_t>(is.tellg());
        if (bytes == 0 || bytes % kRecord != 0)
            throw std::runtime_error("misaligned CIFAR-10 records in " + path);
        is.seekg(0);
        std::size_t records = bytes / kRecord;
        std::vector<unsigned char> rec(kRecord);
        for (std::size_t r = 0; r < records; ++r) {
            if (!is.read(reinterpret_cast<char*>(rec.data()), kRecord))
                throw std::runtime_error("truncated file: " + path);
            data.labels.push_back(rec[0]);
            for (std::size_t k = 0; k < kPixels; ++k)
                all.push_back(static_cast<double>(rec[1 + k]) / 255.0);
        }
    }
    data.samples = Matrix(data.labels.size(), kPixels);
    data.samples.data = std::move(all);
    return data;
}

namespace {

constexpr char kFlatMagic[4] = {'S', 'C', 'D', 'S'};
constexpr std::uint32_t kFlatVersion = 1;

void write_le_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_le_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_le_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("truncated file: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_le_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error("truncated file: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_flat_dataset(const LabeledDataset& data, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(kFlatMagic, 4);
    write_le_u32(os, kFlatVersion);
    write_le_u64(os, data.samples.rows);
    write_le_u64(os, data.samples.cols);
    for (double v : data.samples.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_le_u64(os, bits);
    }
    for (int y : data.labels) write_le_u32(os, static_cast<std::uint32_t>(y));
    if (!os) throw std::runtime_error("write failed for " + path);
}

LabeledDataset load_flat_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kFlatMagic, 4) != 0)
        throw std::runtime_error("bad dataset magic in " + path);
    std::uint32_t version = read_le_u32(is, path);
    if (version != kFlatVersion)
        throw std::runtime_error("unsupported dataset version in " + path);
    std::uint64_t count = read_le_u64(is, path);
    std::uint64_t dim = read_le_u64(is, path);
    LabeledDataset data;
    data.samples = Matrix(count, dim);
    for (double& v : data.samples.data) {
        std::uint64_t bits = read_le_u64(is, path);
        std::memcpy(&v, &bits, 8);
    }
    data.labels.resize(count);
    for (auto& y : data.labels) y = static_cast<int>(read_le_u32(is, path));
    return data;
}

void split_train_eval(const LabeledDataset& data, std::size_t num_classes,
                      std::size_t per_class, std::size_t eval_per_class, RngState& rng,
                      LabeledDataset& train_pool, LabeledDataset& eval_out) {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        int y = data.labels[i];
        if (y >= 0 && static_cast<std::size_t>(y) < num_classes)
            by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        if (by_class[c].size() < per_class + eval_per_class)
            throw std::invalid_argument("split_train_eval: class " + std::to_string(c) +
                                        " has too few samples");

    auto copy_rows = [&](const std::vector<std::size_t>& idx, LabeledDataset& out) {
        out.samples = Matrix(idx.size(), data.dim());
        out.labels.resize(idx.size());
        for (std::size_t t = 0; t < idx.size(); ++t) {
            const double* src = data.samples.row_ptr(idx[t]);
            std::copy(src, src + data.dim(), out.samples.row_ptr(t));
            out.labels[t] = data.labels[idx[t]];
        }
    };

    std::vector<std::size_t> train_idx, eval_idx;
    for (std::size_t c = 0; c < num_classes; ++c) {
        rng.shuffle(by_class[c]);
        for (std::size_t t = 0; t < per_class; ++t) train_idx.push_back(by_class[c][t]);
        for (std::size_t t = 0; t < eval_per_class; ++t)
            eval_idx.push_back(by_class[c][per_class + t]);
    }
    copy_rows(train_idx, train_pool);
    copy_rows(eval_idx, eval_out);
}

namespace {

struct OrderedSample {
    std::size_t dataset_index;
    int label;
};

// Draw the per-class sample and produce the ordered sequence for one kind.
std::vector<OrderedSample> ordered_sequence(const LabeledDataset& data, const StreamSpec& spec,
                                            RngState& rng) {
    const std::size_t T = spec.num_classes;
    const std::size_t U = spec.per_class;

    std::vector<std::vector<std::size_t>> by_class(T);
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        int y = data.labels[i];
        if (y >= 0 && static_cast<std::size_t>(y) < T)
            by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    for (std::size_t t = 0; t < T; ++t) {
        if (by_class[t].size() < U)
            throw std::invalid_argument("build_stream: class " + std::to_string(t) +
                                        " has fewer than U samples");
        rng.shuffle(by_class[t]);
        by_class[t].resize(U);
    }

    // Class segment lengths; only seq-im truncates.
    std::vector<std::size_t> lengths(T, U);
    if (spec.kind == StreamKind::seq_im) {
        std::size_t lo = (U + 1) / 2;  // ceil(U/2)
        for (std::size_t t = 0; t < T; ++t)
            lengths[t] = lo + static_cast<std::size_t>(rng.next_below(U - lo + 1));
    }

    std::vector<OrderedSample> seq;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t u = 0; u < lengths[t]; ++u)
            seq.push_back({by_class[t][u], static_cast<int>(t)});

    switch (spec.kind) {
        case StreamKind::iid: {
            rng.shuffle(seq);
            break;
        }
        case StreamKind::seq:
        case StreamKind::seq_im:
            break;
        case StreamKind::seq_bl: {
            // Pairwise swaps inside the 25% windows at each class boundary,
            // swap probability rising linearly from 0.05 at the window edge
            // to 0.5 at the boundary.
            std::vector<std::size_t> starts(T, 0);
            for (std::size_t t = 1; t < T; ++t) starts[t] = starts[t - 1] + lengths[t - 1];
            for (std::size_t t = 0; t + 1 < T; ++t) {
                std::size_t w = std::min(lengths[t] / 4, lengths[t + 1] / 4);
                std::size_t boundary = starts[t] + lengths[t];
                for (std::size_t d = 0; d < w; ++d) {
                    double frac = w > 1 ? static_cast<double>(d) / static_cast<double>(w - 1)
                                        : 0.0;
                    double prob = 0.5 - 0.45 * frac;
                    if (rng.next_double() < prob)
                        std::swap(seq[boundary - 1 - d], seq[boundary + d]);
                }
            }
            break;
        }
        case StreamKind::seq_cc: {
            // Adjacent classes grouped two by two; shuffle inside each group.
            std::vector<std::size_t> starts(T, 0);
            for (std::size_t t = 1; t < T; ++t) starts[t] = starts[t - 1] + lengths[t - 1];
            for (std::size_t g = 0; g < T; g += 2) {
                std::size_t begin = starts[g];
                std::size_t end = (g + 1 < T) ? starts[g + 1] + lengths[g + 1]
                                              : starts[g] + lengths[g];
                // Fisher-Yates over the group slice.
                for (std::size_t span = end - begin; span > 1; --span) {
                    std::size_t j = static_cast<std::size_t>(rng.next_below(span));
                    std::swap(seq[begin + span - 1], seq[begin + j]);
                }
            }
            break;
        }
    }
    return seq;
}

}  // namespace

std::vector<StreamBatch> build_stream(const LabeledDataset& data, const StreamSpec& spec,
                                      RngState& rng) {
    if (spec.num_classes == 0 || spec.per_class == 0 || spec.batch_size == 0)
        throw std::invalid_argument("build_stream: T, U and n must be positive");

    auto seq = ordered_sequence(data, spec, rng);

    std::vector<StreamBatch> batches;
    for (std::size_t pos = 0; pos < seq.size(); pos += spec.batch_size) {
        std::size_t take = std::min(spec.batch_size, seq.size() - pos);
        StreamBatch batch;
        batch.samples = Matrix(take, data.dim());
        batch.provenance.resize(take);
        for (std::size_t t = 0; t < take; ++t) {
            const double* src = data.samples.row_ptr(seq[pos + t].dataset_index);
            std::copy(src, src + data.dim(), batch.samples.row_ptr(t));
            batch.provenance[t] = seq[pos + t].label;
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

namespace {

void augment_vector(const double* src, double* dst, std::size_t d, const Augmenter& aug,
                    RngState& rng) {
    double s = aug.scale_min + (aug.scale_max - aug.scale_min) * rng.next_double();
    for (std::size_t j = 0; j < d; ++j)
        dst[j] = src[j] * s + aug.noise_sigma * rng.next_normal();
}

void augment_image(const double* src, double* dst, const Augmenter& aug, RngState& rng) {
    const std::size_t h = aug.image_height;
    const std::size_t w = aug.image_width;
    const std::size_t channels = aug.mode == AugmentMode::rgb_image ? 3 : 1;
    const std::size_t plane = h * w;

    std::vector<double> work(src, src + channels * plane);

    // Zero-pad then crop back to the original size at a random offset.
    if (aug.crop_padding > 0) {
        const std::size_t pad = aug.crop_padding;
        std::size_t dy = static_cast<std::size_t>(rng.next_below(2 * pad + 1));
        std::size_t dx = static_cast<std::size_t>(rng.next_below(2 * pad + 1));
        std::vector<double> cropped(channels * plane, 0.0);
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    // Source coordinate in the padded frame.
                    std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) -
                                        static_cast<std::ptrdiff_t>(pad);
                    std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + dx) -
                                        static_cast<std::ptrdiff_t>(pad);
                    if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(h) ||
                        sx >= static_cast<std::ptrdiff_t>(w))
                        continue;
                    cropped[c * plane + y * w + x] =
                        work[c * plane + static_cast<std::size_t>(sy) * w +
                             static_cast<std::size_t>(sx)];
                }
        work = std::move(cropped);
    }

    if (rng.next_double() < aug.flip_prob) {
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w / 2; ++x)
                    std::swap(work[c * plane + y * w + x], work[c * plane + y * w + (w - 1 - x)]);
    }

    double brightness =
        aug.brightness_min + (aug.brightness_max - aug.brightness_min) * rng.next_double();
    double contrast = aug.contrast_min + (aug.contrast_max - aug.contrast_min) * rng.next_double();
    double mean = 0.0;
    for (double v : work) mean += v;
    mean /= static_cast<double>(work.size());
    for (double& v : work) {
        v *= brightness;
        v = (v - mean) * contrast + mean;
        v = std::clamp(v, 0.0, 1.0);
    }

    if (aug.mode == AugmentMode::rgb_image && rng.next_double() < aug.grayscale_prob) {
        for (std::size_t p = 0; p < plane; ++p) {
            double lum = 0.299 * work[p] + 0.587 * work[plane + p] + 0.114 * work[2 * plane + p];
            work[p] = work[plane + p] = work[2 * plane + p] = lum;
        }
    }

    std::copy(work.begin(), work.end(), dst);
}

}  // namespace

Matrix augment_two_views(const Matrix& batch, const Augmenter& aug, RngState& rng) {
    aug.validate();
    if (aug.mode != AugmentMode::vector_jitter) {
        std::size_t channels = aug.mode == AugmentMode::rgb_image ? 3 : 1;
        if (batch.cols != channels * aug.image_height * aug.image_width)
            throw std::invalid_argument("augment_two_views: row width does not match image dims");
    }
    Matrix out(2 * batch.rows, batch.cols);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        const double* src = batch.row_ptr(i);
        for (std::size_t view = 0; view < 2; ++view) {
            double* dst = out.row_ptr(2 * i + view);
            if (aug.mode == AugmentMode::vector_jitter)
                augment_vector(src, dst, batch.cols, aug, rng);
            else
                augment_image(src, dst, aug, rng);
        }
    }
    return out;
}

}  // namespace scale
