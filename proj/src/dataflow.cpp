#include "dataflow.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace projpost {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

std::uint32_t read_u32_be(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {
        static_cast<unsigned char>(v >> 24),
        static_cast<unsigned char>(v >> 16),
        static_cast<unsigned char>(v >> 8),
        static_cast<unsigned char>(v),
    };
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void Dataset::validate() const {
    if (size() < 1) throw ConfigError("dataset is empty");
    if (!inputs.allFinite()) throw NumericError("dataset inputs contain non-finite values");
    if (kind == DatasetKind::Regression) {
        if (targets.rows() != inputs.rows()) throw ShapeError("dataset target count mismatch");
        if (!targets.allFinite()) throw NumericError("dataset targets contain non-finite values");
    } else {
        if (std::ptrdiff_t(labels.size()) != inputs.rows())
            throw ShapeError("dataset label count mismatch");
        for (int c : labels)
            if (c < 0 || c >= num_classes) throw ConfigError("dataset label out of range");
    }
}

Dataset gen_toy_regression(int n_per_cluster, double noise_sd, std::uint64_t seed) {
    require(n_per_cluster >= 1, "n_per_cluster must be >= 1");
    require(noise_sd >= 0.0, "noise_sd must be >= 0");
    Rng rng(seed);
    const int n = 2 * n_per_cluster;
    Dataset d;
    d.kind = DatasetKind::Regression;
    d.name = "toy-regression";
    d.inputs.resize(n, 1);
    d.targets.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        const double x = (i < n_per_cluster) ? rng.uniform(-1.0, -0.4) : rng.uniform(0.4, 1.0);
        d.inputs(i, 0) = x;
        d.targets(i, 0) = std::sin(3.0 * x) + noise_sd * rng.normal();
    }
    return d;
}

Dataset gen_two_moons(int n, double noise_sd, std::uint64_t seed) {
    require(n >= 1, "n must be >= 1");
    require(noise_sd >= 0.0, "noise_sd must be >= 0");
    Rng rng(seed);
    const int n_upper = (n + 1) / 2;
    const int n_lower = n / 2;
    Dataset d;
    d.kind = DatasetKind::Classification;
    d.num_classes = 2;
    d.name = "two-moons";
    d.inputs.resize(n, 2);
    d.labels.resize(size_t(n));
    for (int i = 0; i < n_upper; ++i) {
        const double t = (n_upper > 1) ? M_PI * i / (n_upper - 1) : 0.0;
        d.inputs(i, 0) = std::cos(t) + noise_sd * rng.normal();
        d.inputs(i, 1) = std::sin(t) + noise_sd * rng.normal();
        d.labels[size_t(i)] = 0;
    }
    for (int i = 0; i < n_lower; ++i) {
        const double t = (n_lower > 1) ? M_PI * i / (n_lower - 1) : 0.0;
        const int row = n_upper + i;
        d.inputs(row, 0) = 1.0 - std::cos(t) + noise_sd * rng.normal();
        d.inputs(row, 1) = 0.5 - std::sin(t) + noise_sd * rng.normal();
        d.labels[size_t(row)] = 1;
    }
    return d;
}

Dataset gen_ood_blob(int n, const Vec& center, double sd, std::uint64_t seed) {
    require(n >= 1, "n must be >= 1");
    require(sd >= 0.0, "sd must be >= 0");
    require(center.size() >= 1, "blob center must be non-empty");
    Rng rng(seed);
    Dataset d;
    d.kind = DatasetKind::Classification;
    d.num_classes = 1;
    d.name = "ood-blob";
    d.inputs.resize(n, center.size());
    d.labels.assign(size_t(n), 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < center.size(); ++j) d.inputs(i, j) = center[j] + sd * rng.normal();
    return d;
}

IdxTensor load_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx: cannot open " + path);
    unsigned char magic[4];
    in.read(reinterpret_cast<char*>(magic), 4);
    if (!in) throw IoError("idx: truncated header in " + path);
    if (magic[0] != 0 || magic[1] != 0) throw IoError("idx: bad magic in " + path);
    if (magic[2] != 0x08) throw IoError("idx: unsupported type code in " + path + " (only u8)");
    const int ndim = magic[3];
    if (ndim < 1) throw IoError("idx: zero-dimensional tensor in " + path);

    IdxTensor t;
    t.dims.resize(size_t(ndim));
    for (int i = 0; i < ndim; ++i) t.dims[size_t(i)] = read_u32_be(in);

    const std::ptrdiff_t count = t.element_count();
    t.data.resize(size_t(count));
    in.read(reinterpret_cast<char*>(t.data.data()), count);
    if (in.gcount() != count) throw IoError("idx: truncated payload in " + path);
    return t;
}

void write_idx(const std::string& path, const IdxTensor& tensor) {
    if (std::ptrdiff_t(tensor.data.size()) != tensor.element_count())
        throw ShapeError("idx: payload size does not match dims");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("idx: cannot open " + path + " for writing");
    const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(tensor.dims.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (std::uint32_t d : tensor.dims) write_u32_be(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              std::streamsize(tensor.data.size()));
    if (!out) throw IoError("idx: write failed for " + path);
}

Dataset dataset_from_idx(const std::string& images_path, const std::string& labels_path,
                         int num_classes, std::ptrdiff_t limit, double scale) {
    require(num_classes >= 1, "num_classes must be >= 1");
    const IdxTensor images = load_idx(images_path);
    const IdxTensor labels = load_idx(labels_path);
    if (images.dims.size() < 2) throw IoError("idx: image tensor needs at least 2 dims");
    if (labels.dims.size() != 1) throw IoError("idx: label tensor must be 1-D");
    std::ptrdiff_t n = images.dims[0];
    if (std::ptrdiff_t(labels.dims[0]) != n) throw ShapeError("idx: image/label count mismatch");
    if (limit > 0 && limit < n) n = limit;
    const std::ptrdiff_t pixels = images.element_count() / std::ptrdiff_t(images.dims[0]);

    Dataset d;
    d.kind = DatasetKind::Classification;
    d.num_classes = num_classes;
    d.name = "idx";
    d.inputs.resize(n, pixels);
    d.labels.resize(size_t(n));
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        for (std::ptrdiff_t p = 0; p < pixels; ++p)
            d.inputs(i, p) = scale * double(images.data[size_t(i * pixels + p)]);
        const int label = labels.data[size_t(i)];
        if (label >= num_classes) throw ConfigError("idx: label exceeds num_classes");
        d.labels[size_t(i)] = label;
    }
    return d;
}

Dataset load_csv(const std::string& path, int input_dim, int output_dim, DatasetKind kind) {
    require(input_dim >= 1, "input_dim must be >= 1");
    require(output_dim >= 1, "output_dim must be >= 1");
    std::ifstream in(path);
    if (!in) throw IoError("csv: cannot open " + path);
    const int fields = input_dim + (kind == DatasetKind::Regression ? output_dim : 1);

    std::vector<std::vector<double>> rows;
    std::string line;
    std::ptrdiff_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            size_t pos = 0;
            double v;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw IoError("csv: bad number at line " + std::to_string(line_no));
            }
            while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
            if (pos != cell.size())
                throw IoError("csv: trailing garbage at line " + std::to_string(line_no));
            if (!std::isfinite(v))
                throw IoError("csv: non-finite value at line " + std::to_string(line_no));
            row.push_back(v);
        }
        if (int(row.size()) != fields)
            throw IoError("csv: expected " + std::to_string(fields) + " fields at line " +
                          std::to_string(line_no) + ", got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("csv: no data rows in " + path);

    Dataset d;
    d.kind = kind;
    d.name = "csv";
    const std::ptrdiff_t n = std::ptrdiff_t(rows.size());
    d.inputs.resize(n, input_dim);
    if (kind == DatasetKind::Regression) {
        d.targets.resize(n, output_dim);
    } else {
        d.num_classes = output_dim;
        d.labels.resize(size_t(n));
    }
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        for (int j = 0; j < input_dim; ++j) d.inputs(i, j) = rows[size_t(i)][size_t(j)];
        if (kind == DatasetKind::Regression) {
            for (int j = 0; j < output_dim; ++j)
                d.targets(i, j) = rows[size_t(i)][size_t(input_dim + j)];
        } else {
            const double raw = rows[size_t(i)][size_t(input_dim)];
            const int label = int(std::llround(raw));
            if (double(label) != raw || label < 0 || label >= output_dim)
                throw IoError("csv: invalid class index at line " + std::to_string(i + 1));
            d.labels[size_t(i)] = label;
        }
    }
    return d;
}

Dataset rotate_square_images(const Dataset& dataset, double degrees) {
    const std::ptrdiff_t pixels = dataset.inputs.cols();
    const int w = int(std::llround(std::sqrt(double(pixels))));
    if (std::ptrdiff_t(w) * w != pixels)
        throw ShapeError("rotate: input dimension is not a perfect square");
    if (degrees == 0.0) return dataset;

    const double rad = degrees * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double center = 0.5 * (w - 1);
    Dataset out = dataset;
    out.inputs.setZero();
    for (std::ptrdiff_t i = 0; i < dataset.size(); ++i) {
        for (int row = 0; row < w; ++row) {
            for (int col = 0; col < w; ++col) {
                // Inverse map: rotate the destination pixel back by -degrees.
                const double x = col - center, y = row - center;
                const int src_col = int(std::llround(c * x + s * y + center));
                const int src_row = int(std::llround(-s * x + c * y + center));
                if (src_col < 0 || src_col >= w || src_row < 0 || src_row >= w) continue;
                out.inputs(i, row * w + col) = dataset.inputs(i, src_row * w + src_col);
            }
        }
    }
    return out;
}

BatchPartition partition(std::ptrdiff_t n, int batch_size, std::uint64_t seed) {
    require(n >= 1, "partition: n must be >= 1");
    require(batch_size >= 1, "partition: batch size must be >= 1");
    std::vector<std::ptrdiff_t> order(static_cast<size_t>(n));
    for (std::ptrdiff_t i = 0; i < n; ++i) order[size_t(i)] = i;
    Rng rng(seed);
    for (std::ptrdiff_t i = n - 1; i > 0; --i)
        std::swap(order[size_t(i)], order[rng.below(std::uint64_t(i) + 1)]);

    BatchPartition p;
    p.batch_size = batch_size;
    p.seed = seed;
    for (std::ptrdiff_t start = 0; start < n; start += batch_size) {
        const std::ptrdiff_t stop = std::min(n, start + batch_size);
        p.index_lists.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return p;
}

}  // namespace projpost
