#include "ramp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ramp/errors.hpp"
#include "ramp/rng.hpp"

namespace ramp {

Tensor Dataset::batch_features(std::span<const std::size_t> idx) const {
    std::vector<double> out(idx.size() * dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= size()) throw std::out_of_range("dataset index out of range");
        std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(idx[r] * dim), dim,
                    out.begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    return Tensor::from_data({idx.size(), dim}, std::move(out), false);
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) out[r] = labels[idx[r]];
    return out;
}

Tensor Dataset::all_features() const {
    return Tensor::from_data({size(), dim}, features, false);
}

SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "moons") return SyntheticKind::Moons;
    if (s == "blobs") return SyntheticKind::Blobs;
    throw std::invalid_argument("unknown synthetic dataset kind: " + s);
}

std::string to_string(SyntheticKind kind) {
    return kind == SyntheticKind::Moons ? "moons" : "blobs";
}

Dataset make_synthetic_dataset(SyntheticKind kind, std::size_t n, std::size_t d, double noise,
                               std::uint64_t seed, std::size_t num_classes) {
    if (n < 2) throw std::invalid_argument("dataset needs n >= 2");
    if (d < 2) throw std::invalid_argument("dataset needs d >= 2");
    Rng rng(mix64(seed, 0x64617461ull));

    Dataset out;
    out.dim = d;
    out.features.assign(n * d, 0.5);  // padding dimensions sit mid-box
    out.labels.resize(n);

    if (kind == SyntheticKind::Moons) {
        out.num_classes = 2;
        // two half circles on a fixed canvas, mapped into [0,1]^2:
        // raw x in [-1-3s, 2+3s], raw y in [-0.75-3s, 1+3s] with s = noise
        const double pi = 3.14159265358979323846;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(i % 2);
            const double t = rng.uniform() * pi;
            double x, y;
            if (label == 0) {
                x = std::cos(t);
                y = std::sin(t);
            } else {
                x = 1.0 - std::cos(t);
                y = 0.25 - std::sin(t);
            }
            x += noise * rng.normal();
            y += noise * rng.normal();
            const double pad = 3.0 * std::max(noise, 0.05);
            const double x0 = -1.0 - pad, x1 = 2.0 + pad;
            const double y0 = -0.75 - pad, y1 = 1.0 + pad;
            out.features[i * d + 0] = std::clamp((x - x0) / (x1 - x0), 0.0, 1.0);
            out.features[i * d + 1] = std::clamp((y - y0) / (y1 - y0), 0.0, 1.0);
            out.labels[i] = label;
        }
        return out;
    }

    // blobs: seeded class centers inside [0.25, 0.75]^d; of 64 candidate draws
    // keep the one with the largest minimum pairwise separation
    if (num_classes < 2) throw std::invalid_argument("blobs need num_classes >= 2");
    out.num_classes = num_classes;
    std::vector<double> centers(num_classes * d);
    double best_sep = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<double> cand(num_classes * d);
        for (double& c : cand) c = rng.uniform(0.25, 0.75);
        double sep = 1e300;
        for (std::size_t a = 0; a < num_classes; ++a) {
            for (std::size_t b = a + 1; b < num_classes; ++b) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = cand[a * d + j] - cand[b * d + j];
                    d2 += diff * diff;
                }
                sep = std::min(sep, d2);
            }
        }
        if (sep > best_sep) {
            best_sep = sep;
            centers = cand;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % num_classes;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = centers[label * d + j] + noise * rng.normal();
            out.features[i * d + j] = std::clamp(v, 0.0, 1.0);
        }
        out.labels[i] = static_cast<int>(label);
    }
    return out;
}

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // u8 payload, 3 dims
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // u8 payload, 1 dim

struct IdxFile {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;
};

std::string hex32(std::uint32_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s = "0x";
    for (int i = 7; i >= 0; --i) s += digits[(v >> (4 * i)) & 0xf];
    return s;
}

IdxFile read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open idx file: " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto read_u32be = [&](const char* what) {
        if (pos + 4 > buf.size()) {
            throw ParseError(path.string() + ": truncated while reading " + what, pos);
        }
        const std::uint32_t v = (static_cast<std::uint32_t>(buf[pos]) << 24) |
                                (static_cast<std::uint32_t>(buf[pos + 1]) << 16) |
                                (static_cast<std::uint32_t>(buf[pos + 2]) << 8) |
                                static_cast<std::uint32_t>(buf[pos + 3]);
        pos += 4;
        return v;
    };

    IdxFile f;
    f.magic = read_u32be("magic");
    if (f.magic != expected_magic) {
        throw ParseError(path.string() + ": bad idx magic, expected " + hex32(expected_magic) +
                             ", found " + hex32(f.magic),
                         0);
    }
    const std::size_t ndims = f.magic & 0xff;
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        f.dims.push_back(read_u32be("dimension size"));
        total *= f.dims.back();
    }
    if (pos + total > buf.size()) {
        throw ParseError(path.string() + ": payload shorter than header promises (" +
                             std::to_string(buf.size() - pos) + " of " + std::to_string(total) +
                             " bytes)",
                         pos);
    }
    f.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                     buf.begin() + static_cast<std::ptrdiff_t>(pos + total));
    return f;
}

}  // namespace

Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path, std::size_t limit) {
    IdxFile images = read_idx(images_path, kIdxImagesMagic);
    IdxFile labels = read_idx(labels_path, kIdxLabelsMagic);

    if (images.dims.size() != 3) {
        throw ParseError(images_path.string() + ": expected 3 dimensions for images", 3);
    }
    const std::size_t n_img = images.dims[0];
    const std::size_t d = static_cast<std::size_t>(images.dims[1]) * images.dims[2];
    if (labels.dims.size() != 1 || labels.dims[0] != n_img) {
        throw ParseError(labels_path.string() + ": label count " +
                             std::to_string(labels.dims.empty() ? 0 : labels.dims[0]) +
                             " does not match image count " + std::to_string(n_img),
                         4);
    }

    const std::size_t n = (limit == 0) ? n_img : std::min<std::size_t>(limit, n_img);
    Dataset out;
    out.dim = d;
    out.features.resize(n * d);
    out.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out.features[i * d + j] = static_cast<double>(images.payload[i * d + j]) / 255.0;
        }
        out.labels[i] = static_cast<int>(labels.payload[i]);
        max_label = std::max(max_label, out.labels[i]);
    }
    out.num_classes = static_cast<std::size_t>(max_label) + 1;
    // idx label files carry digits 0..9; keep at least binary width
    out.num_classes = std::max<std::size_t>(out.num_classes, 2);
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double first_fraction,
                                          std::uint64_t seed) {
    if (first_fraction <= 0.0 || first_fraction >= 1.0) {
        throw std::invalid_argument("split fraction must be in (0, 1)");
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix64(seed, 0x73706c6974ull));
    rng.shuffle(idx);

    const std::size_t n_first = std::max<std::size_t>(
        1, std::min<std::size_t>(data.size() - 1,
                                 static_cast<std::size_t>(first_fraction * static_cast<double>(data.size()))));
    auto take = [&](std::size_t lo, std::size_t hi) {
        Dataset out;
        out.dim = data.dim;
        out.num_classes = data.num_classes;
        out.features.resize((hi - lo) * data.dim);
        out.labels.resize(hi - lo);
        for (std::size_t r = lo; r < hi; ++r) {
            std::copy_n(data.features.begin() + static_cast<std::ptrdiff_t>(idx[r] * data.dim),
                        data.dim,
                        out.features.begin() + static_cast<std::ptrdiff_t>((r - lo) * data.dim));
            out.labels[r - lo] = data.labels[idx[r]];
        }
        return out;
    };
    return {take(0, n_first), take(n_first, data.size())};
}

}  // namespace ramp
