#include "weedout/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bytes.hpp"
#include "weedout/errors.hpp"

namespace weedout {

Shape Dataset::sample_shape() const {
    const Shape& s = inputs.shape();
    if (s.size() < 2) return {1};
    return Shape(s.begin() + 1, s.end());
}

std::size_t Dataset::sample_size() const {
    return shape_size(sample_shape());
}

void Dataset::validate() const {
    if (labels.empty()) throw InvalidArgument("dataset is empty");
    if (num_classes < 1) throw InvalidArgument("dataset has no classes");
    if (inputs.rank() < 1 || inputs.dim(0) != labels.size()) {
        throw InvalidArgument("dataset inputs " + shape_string(inputs.shape()) + " do not match " +
                              std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw InvalidArgument("label " + std::to_string(y) + " out of range");
    }
    if (!inputs.all_finite()) throw InvalidArgument("dataset inputs contain non-finite values");
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw InvalidArgument("gather: empty index set");
    const std::size_t width = ds.sample_size();
    Shape shape = ds.inputs.shape();
    shape[0] = indices.size();
    std::vector<double> data(indices.size() * width);
    std::vector<int> labels(indices.size());
    auto src = ds.inputs.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t k = indices[i];
        if (k >= ds.size()) throw InvalidArgument("gather: index " + std::to_string(k) + " out of range");
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(k * width), width,
                    data.begin() + static_cast<std::ptrdiff_t>(i * width));
        labels[i] = ds.labels[k];
    }
    return {Tensor(std::move(shape), std::move(data)), std::move(labels)};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Batch b = gather(*this, indices);
    return {std::move(b.inputs), std::move(b.labels), num_classes, provenance};
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    return counts;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

int classes_from_labels(std::span<const int> labels) {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

}  // namespace

Dataset decode_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes) {
    if (image_bytes.size() < 16) throw FormatError(image_bytes.size(), "IDX image header truncated");
    if (bytes::read_be32(image_bytes, 0) != kIdxImageMagic) throw FormatError(0, "bad IDX image magic");
    if (label_bytes.size() < 8) throw FormatError(label_bytes.size(), "IDX label header truncated");
    if (bytes::read_be32(label_bytes, 0) != kIdxLabelMagic) throw FormatError(0, "bad IDX label magic");

    const std::size_t n = bytes::read_be32(image_bytes, 4);
    const std::size_t rows = bytes::read_be32(image_bytes, 8);
    const std::size_t cols = bytes::read_be32(image_bytes, 12);
    const std::size_t n_labels = bytes::read_be32(label_bytes, 4);
    if (n == 0 || rows == 0 || cols == 0) throw FormatError(4, "IDX image header has a zero dimension");
    if (n_labels != n) {
        throw FormatError(4, "IDX label count " + std::to_string(n_labels) + " does not match image count " +
                                 std::to_string(n));
    }
    const std::size_t pixels = rows * cols;
    const std::size_t expected_images = 16 + n * pixels;
    if (image_bytes.size() != expected_images) {
        throw FormatError(std::min(image_bytes.size(), expected_images),
                          "IDX image payload is " + std::to_string(image_bytes.size()) + " bytes, expected " +
                              std::to_string(expected_images));
    }
    if (label_bytes.size() != 8 + n) {
        throw FormatError(std::min(label_bytes.size(), 8 + n),
                          "IDX label payload is " + std::to_string(label_bytes.size()) + " bytes, expected " +
                              std::to_string(8 + n));
    }

    std::vector<double> data(n * pixels);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = image_bytes[16 + i] / 255.0;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = label_bytes[8 + i];
    Dataset ds{Tensor({n, rows, cols, 1}, std::move(data)), std::move(labels), 0, "idx"};
    ds.num_classes = classes_from_labels(ds.labels);
    return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    auto ib = bytes::read_file(images);
    auto lb = bytes::read_file(labels);
    Dataset ds = decode_idx(ib, lb);
    ds.provenance = "idx:" + images.filename().string();
    return ds;
}

std::vector<std::uint8_t> encode_idx_images(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> pixels) {
    if (rows == 0 || cols == 0 || pixels.size() % (rows * cols) != 0) {
        throw InvalidArgument("encode_idx_images: pixel count is not a multiple of rows*cols");
    }
    std::vector<std::uint8_t> out;
    out.reserve(16 + pixels.size());
    bytes::put_be32(out, kIdxImageMagic);
    bytes::put_be32(out, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
    bytes::put_be32(out, static_cast<std::uint32_t>(rows));
    bytes::put_be32(out, static_cast<std::uint32_t>(cols));
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    bytes::put_be32(out, kIdxLabelMagic);
    bytes::put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

// ---------------------------------------------------------------------------
// CIFAR-10

Dataset decode_cifar10(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw FormatError(0, "CIFAR-10 batch is empty");
    if (bytes.size() % kCifarRecord != 0) {
        throw FormatError(bytes.size() - bytes.size() % kCifarRecord,
                          "CIFAR-10 batch size " + std::to_string(bytes.size()) + " is not a multiple of " +
                              std::to_string(kCifarRecord));
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    std::vector<double> data(n * kCifarPixels);
    std::vector<int> labels(n);
    constexpr std::size_t plane = kCifarSide * kCifarSide;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t base = r * kCifarRecord;
        if (bytes[base] > 9) throw FormatError(base, "CIFAR-10 label byte " + std::to_string(bytes[base]) + " > 9");
        labels[r] = bytes[base];
        double* out = data.data() + r * kCifarPixels;
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < plane; ++p) out[p * 3 + c] = bytes[base + 1 + c * plane + p] / 255.0;
        }
    }
    return {Tensor({n, kCifarSide, kCifarSide, 3}, std::move(data)), std::move(labels), 10, "cifar10"};
}

Dataset load_cifar10_binary(std::span<const std::filesystem::path> batch_files) {
    if (batch_files.empty()) throw InvalidArgument("load_cifar10_binary: no batch files");
    std::vector<std::uint8_t> all;
    for (const auto& path : batch_files) {
        auto b = bytes::read_file(path);
        if (b.size() % kCifarRecord != 0) {
            throw FormatError(b.size() - b.size() % kCifarRecord,
                              path.filename().string() + ": size is not a multiple of " + std::to_string(kCifarRecord));
        }
        all.insert(all.end(), b.begin(), b.end());
    }
    return decode_cifar10(all);
}

std::vector<std::uint8_t> encode_cifar10_record(const Dataset& ds, std::size_t index) {
    if (ds.sample_shape() != Shape{kCifarSide, kCifarSide, 3}) {
        throw ShapeMismatch("encode_cifar10_record: sample shape " + shape_string(ds.sample_shape()));
    }
    if (index >= ds.size()) throw InvalidArgument("encode_cifar10_record: index out of range");
    std::vector<std::uint8_t> out(kCifarRecord);
    out[0] = static_cast<std::uint8_t>(ds.labels[index]);
    const double* in = ds.inputs.data().data() + index * kCifarPixels;
    constexpr std::size_t plane = kCifarSide * kCifarSide;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
            out[1 + c * plane + p] = static_cast<std::uint8_t>(std::lround(std::clamp(in[p * 3 + c], 0.0, 1.0) * 255.0));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic

Dataset synthetic_blobs(int num_classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed) {
    if (num_classes < 1 || per_class == 0 || dim == 0 || !(spread >= 0.0)) {
        throw InvalidArgument("synthetic_blobs: arguments must be positive");
    }
    if (dim < static_cast<std::size_t>(num_classes)) {
        throw InvalidArgument("synthetic_blobs: dim must be at least num_classes");
    }
    const std::size_t k = static_cast<std::size_t>(num_classes);
    const std::size_t n = k * per_class;
    RngStream rng(seed);
    std::vector<double> data(n * dim);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % k;
        labels[i] = static_cast<int>(c);
        double* row = data.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) row[j] = spread * rng.normal();
        row[c] += 1.0;
    }
    return {Tensor({n, dim}, std::move(data)), std::move(labels), num_classes, "blobs"};
}

namespace {
constexpr char kDatasetMagic[4] = {'W', 'D', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::vector<std::uint8_t> out(kDatasetMagic, kDatasetMagic + 4);
    bytes::put_le32(out, kDatasetVersion);
    bytes::put_le32(out, static_cast<std::uint32_t>(ds.inputs.rank()));
    for (std::size_t d : ds.inputs.shape()) bytes::put_le64(out, d);
    bytes::put_le32(out, static_cast<std::uint32_t>(ds.num_classes));
    bytes::put_string(out, ds.provenance);
    for (double v : ds.inputs.data()) bytes::put_f64(out, v);
    for (int y : ds.labels) bytes::put_le32(out, static_cast<std::uint32_t>(y));
    bytes::write_file(path, out);
}

Dataset load_dataset(const std::filesystem::path& path) {
    auto raw = bytes::read_file(path);
    bytes::Reader r(raw);
    auto magic = r.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kDatasetMagic)) throw FormatError(0, "bad dataset magic");
    const std::size_t version_at = r.offset();
    if (r.le32("version") != kDatasetVersion) throw FormatError(version_at, "unsupported dataset version");
    const std::uint32_t rank = r.le32("rank");
    if (rank == 0 || rank > 8) throw FormatError(r.offset() - 4, "implausible dataset rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.le64("shape");
    Dataset ds;
    ds.num_classes = static_cast<int>(r.le32("class count"));
    ds.provenance = r.str("provenance");
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = r.f64("inputs");
    ds.labels.resize(shape[0]);
    for (int& y : ds.labels) y = static_cast<int>(r.le32("labels"));
    if (!r.done()) throw FormatError(r.offset(), "trailing bytes after dataset");
    ds.inputs = Tensor(std::move(shape), std::move(data));
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Splits and batches

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, RngStream& rng) {
    if (count > n) throw InvalidArgument("cannot draw " + std::to_string(count) + " of " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

std::vector<Dataset> partition(const Dataset& ds, std::span<const std::size_t> counts, std::uint64_t seed) {
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total != ds.size()) {
        throw InvalidArgument("split sizes sum to " + std::to_string(total) + " but dataset has " +
                              std::to_string(ds.size()) + " examples");
    }
    if (std::find(counts.begin(), counts.end(), std::size_t{0}) != counts.end()) {
        throw InvalidArgument("split would produce an empty part");
    }
    RngStream rng(seed);
    const auto perm = sample_without_replacement(ds.size(), ds.size(), rng);
    std::vector<Dataset> parts;
    std::size_t at = 0;
    for (std::size_t c : counts) {
        parts.push_back(ds.subset(std::span(perm).subspan(at, c)));
        at += c;
    }
    return parts;
}

Splits split(const Dataset& ds, const SplitSpec& spec) {
    if (spec.fractions.has_value() == spec.counts.has_value()) {
        throw InvalidArgument("split: give exactly one of fractions or counts");
    }
    const std::size_t n = ds.size();
    std::array<std::size_t, 3> sizes{};
    if (spec.counts) {
        sizes = *spec.counts;
    } else {
        const auto& f = *spec.fractions;
        if (std::any_of(f.begin(), f.end(), [](double x) { return !(x >= 0.0); }) ||
            std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
            throw InvalidArgument("split: fractions must be non-negative and sum to 1");
        }
        sizes[0] = static_cast<std::size_t>(std::floor(f[0] * static_cast<double>(n) + 0.5));
        sizes[1] = static_cast<std::size_t>(std::floor(f[1] * static_cast<double>(n) + 0.5));
        if (sizes[0] + sizes[1] > n) throw InvalidArgument("split: fractions exceed dataset size");
        sizes[2] = n - sizes[0] - sizes[1];
    }
    if (sizes[0] + sizes[1] + sizes[2] != n) {
        throw InvalidArgument("split sizes sum to " + std::to_string(sizes[0] + sizes[1] + sizes[2]) +
                              " but dataset has " + std::to_string(n) + " examples");
    }
    if (std::find(sizes.begin(), sizes.end(), std::size_t{0}) != sizes.end()) {
        throw InvalidArgument("split would produce an empty part");
    }

    Splits out;
    RngStream rng(spec.seed);
    const auto perm = sample_without_replacement(n, n, rng);
    std::size_t at = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        out.indices[p].assign(perm.begin() + static_cast<std::ptrdiff_t>(at),
                              perm.begin() + static_cast<std::ptrdiff_t>(at + sizes[p]));
        at += sizes[p];
    }
    out.train = ds.subset(out.indices[0]);
    out.validation = ds.subset(out.indices[1]);
    out.test = ds.subset(out.indices[2]);
    return out;
}

Dataset take(const Dataset& ds, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw InvalidArgument("take: count must be positive");
    RngStream rng(seed);
    const auto idx = sample_without_replacement(ds.size(), count, rng);
    return ds.subset(idx);
}

std::vector<std::vector<std::size_t>> epoch_plan(std::size_t n, std::size_t batch_size, RngStream& rng,
                                                 bool drop_last) {
    if (batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
    if (n == 0) throw InvalidArgument("epoch over an empty dataset");
    if (drop_last && batch_size > n) {
        throw InvalidArgument("empty epoch: batch_size " + std::to_string(batch_size) + " exceeds " +
                              std::to_string(n) + " examples with drop_last");
    }
    const auto perm = sample_without_replacement(n, n, rng);
    std::vector<std::vector<std::size_t>> plan;
    for (std::size_t at = 0; at < n; at += batch_size) {
        const std::size_t len = std::min(batch_size, n - at);
        if (drop_last && len < batch_size) break;
        plan.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                          perm.begin() + static_cast<std::ptrdiff_t>(at + len));
    }
    return plan;
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, RngStream& rng, bool drop_last) {
    std::vector<Batch> out;
    for (const auto& idx : epoch_plan(ds.size(), batch_size, rng, drop_last)) out.push_back(gather(ds, idx));
    return out;
}

Batch sample_batch(const Dataset& ds, std::size_t batch_size, RngStream& rng) {
    if (batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
    const auto idx = sample_without_replacement(ds.size(), std::min(batch_size, ds.size()), rng);
    return gather(ds, idx);
}

}  // namespace weedout
