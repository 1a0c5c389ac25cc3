#include "trainer.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace projpost {

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

namespace {

void check_loss_kind(const Dataset& dataset, LossKind loss_kind) {
    const bool classification = dataset.kind == DatasetKind::Classification;
    if (classification != (loss_kind == LossKind::CrossEntropySoftmax))
        throw ConfigError("dataset kind does not match loss kind");
}

Mat gather_rows(const Mat& m, const std::vector<std::ptrdiff_t>& idx) {
    Mat out(std::ptrdiff_t(idx.size()), m.cols());
    for (size_t i = 0; i < idx.size(); ++i) out.row(std::ptrdiff_t(i)) = m.row(idx[i]);
    return out;
}

// Per-datum output-space loss gradients for a batch, one row per datum.
Mat batch_output_grads(const Mat& outputs, const Dataset& dataset, LossKind loss_kind,
                       const std::vector<std::ptrdiff_t>& idx) {
    Mat grads(outputs.rows(), outputs.cols());
    for (std::ptrdiff_t i = 0; i < outputs.rows(); ++i) {
        const Vec y = outputs.row(i);
        if (loss_kind == LossKind::Mse) {
            grads.row(i) = y - Vec(dataset.targets.row(idx[size_t(i)]));
        } else {
            grads.row(i) = cross_entropy_output_grad(y, dataset.labels[size_t(idx[size_t(i)])]);
        }
    }
    return grads;
}

}  // namespace

double dataset_mean_loss(const Network& net, const Vec& theta, const Dataset& dataset,
                         LossKind loss_kind) {
    check_loss_kind(dataset, loss_kind);
    const Mat outputs = net.forward_batch(theta, dataset.inputs);
    KahanSum sum;
    for (std::ptrdiff_t i = 0; i < dataset.size(); ++i) {
        const Vec y = outputs.row(i);
        sum.add(loss_kind == LossKind::Mse ? mse_loss(y, dataset.targets.row(i))
                                           : cross_entropy_loss(y, dataset.labels[size_t(i)]));
    }
    return sum.value() / double(dataset.size());
}

TrainResult train_map(const Network& net, Vec theta_init, const Dataset& dataset,
                      LossKind loss_kind, const TrainConfig& config) {
    config.validate();
    dataset.validate();
    check_loss_kind(dataset, loss_kind);
    net.check_params(theta_init);
    if (dataset.input_dim() != net.input_dim()) throw ShapeError("dataset input dim mismatch");
    if (loss_kind == LossKind::CrossEntropySoftmax && dataset.num_classes != net.output_dim())
        throw ConfigError("class count does not match network output dim");

    TrainResult result;
    result.theta = std::move(theta_init);
    if (config.epochs == 0) return result;

    const std::ptrdiff_t n = dataset.size();
    const double reg = config.weight_decay / double(n);
    Rng rng(config.seed);

    Vec momentum_buf = Vec::Zero(net.param_count());
    Vec adam_m = Vec::Zero(net.param_count());
    Vec adam_v = Vec::Zero(net.param_count());
    long step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const BatchPartition batches = partition(n, config.batch_size, rng.next_u64());
        for (const auto& idx : batches.index_lists) {
            const Mat inputs = gather_rows(dataset.inputs, idx);
            const Mat outputs = net.forward_batch(result.theta, inputs);
            const Mat out_grads = batch_output_grads(outputs, dataset, loss_kind, idx);
            Vec grad = net.vjp_batch_sum(result.theta, inputs, out_grads) / double(idx.size());
            grad += reg * result.theta;

            ++step;
            if (config.optimizer == OptimizerKind::Sgd) {
                momentum_buf = config.momentum * momentum_buf + grad;
                result.theta -= config.learning_rate * momentum_buf;
            } else {
                adam_m = config.beta1 * adam_m + (1.0 - config.beta1) * grad;
                adam_v = config.beta2 * adam_v.array() +
                         (1.0 - config.beta2) * grad.array().square();
                const double bc1 = 1.0 - std::pow(config.beta1, double(step));
                const double bc2 = 1.0 - std::pow(config.beta2, double(step));
                result.theta.array() -= config.learning_rate * (adam_m.array() / bc1) /
                                        ((adam_v.array() / bc2).sqrt() + config.eps);
            }
        }

        const double mean_loss = dataset_mean_loss(net, result.theta, dataset, loss_kind);
        const double objective = mean_loss + 0.5 * reg * result.theta.squaredNorm();
        if (!std::isfinite(objective)) {
            std::ostringstream os;
            os << "training diverged at epoch " << epoch + 1 << " (objective " << objective << ")";
            throw NumericError(os.str());
        }
        result.epoch_mean_loss.push_back(mean_loss);
        result.epoch_objective.push_back(objective);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Binary container

namespace {

constexpr char kMagic[9] = {'P', 'R', 'O', 'J', 'P', 'O', 'S', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw IoError("container: truncated file");
    return v;
}
std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw IoError("container: truncated file");
    return v;
}

void write_container(const std::string& path, std::uint32_t version,
                     const ArchitectureSpec& arch, const Json& meta, const Mat& rows) {
    Json descriptor = meta.is_null() ? Json::object() : meta;
    descriptor["arch"] = arch_to_json(arch);
    const std::string json_text = descriptor.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("container: cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, version);
    put_u32(out, std::uint32_t(json_text.size()));
    out.write(json_text.data(), std::streamsize(json_text.size()));
    put_u64(out, std::uint64_t(rows.cols()));
    if (version >= 2) put_u32(out, std::uint32_t(rows.rows()));

    // Row-major payload so each stored vector is contiguous.
    std::vector<double> payload(size_t(rows.rows()) * size_t(rows.cols()));
    for (std::ptrdiff_t i = 0; i < rows.rows(); ++i)
        for (std::ptrdiff_t j = 0; j < rows.cols(); ++j)
            payload[size_t(i) * size_t(rows.cols()) + size_t(j)] = rows(i, j);
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    const size_t byte_count = payload.size() * sizeof(double);
    out.write(reinterpret_cast<const char*>(bytes), std::streamsize(byte_count));
    put_u32(out, std::uint32_t(crc32(0, bytes, uInt(byte_count))));
    if (!out) throw IoError("container: write failed for " + path);
}

struct RawContainer {
    std::uint32_t version = 0;
    Json descriptor;
    ArchitectureSpec arch;
    Mat rows;
};

RawContainer read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("container: cannot open " + path);
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(kMagic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("container: bad magic in " + path);

    RawContainer raw;
    raw.version = get_u32(in);
    if (raw.version != 1 && raw.version != 2)
        throw IoError("container: unsupported version " + std::to_string(raw.version) + " in " +
                      path);
    const std::uint32_t json_len = get_u32(in);
    std::string json_text(json_len, '\0');
    in.read(json_text.data(), json_len);
    if (!in) throw IoError("container: truncated descriptor in " + path);
    try {
        raw.descriptor = Json::parse(json_text);
    } catch (const Json::exception& e) {
        throw IoError("container: bad descriptor in " + path + ": " + e.what());
    }
    raw.arch = arch_from_json(raw.descriptor.at("arch"));

    const std::uint64_t p = get_u64(in);
    const std::uint32_t k = raw.version >= 2 ? get_u32(in) : 1;
    if (k < 1) throw IoError("container: empty payload in " + path);

    std::vector<double> payload(size_t(p) * k);
    const size_t byte_count = payload.size() * sizeof(double);
    in.read(reinterpret_cast<char*>(payload.data()), std::streamsize(byte_count));
    if (size_t(in.gcount()) != byte_count) throw IoError("container: truncated payload in " + path);
    const std::uint32_t stored_crc = get_u32(in);
    const std::uint32_t actual_crc = std::uint32_t(
        crc32(0, reinterpret_cast<const unsigned char*>(payload.data()), uInt(byte_count)));
    if (stored_crc != actual_crc) throw IoError("container: CRC mismatch in " + path);

    Network net(raw.arch);  // validates and recomputes P
    if (std::uint64_t(net.param_count()) != p)
        throw IoError("container: parameter count disagrees with descriptor in " + path);

    raw.rows.resize(k, std::ptrdiff_t(p));
    for (std::uint32_t i = 0; i < k; ++i)
        for (std::uint64_t j = 0; j < p; ++j)
            raw.rows(i, std::ptrdiff_t(j)) = payload[size_t(i) * size_t(p) + size_t(j)];
    if (!raw.rows.allFinite()) throw NumericError("container: non-finite payload in " + path);
    return raw;
}

}  // namespace

void save_checkpoint(const std::string& path, const ArchitectureSpec& arch, const Vec& theta) {
    if (!theta.allFinite()) throw NumericError("checkpoint: refusing to save non-finite params");
    write_container(path, 1, arch, Json::object(), theta.transpose());
}

std::pair<ArchitectureSpec, Vec> load_checkpoint(const std::string& path) {
    RawContainer raw = read_container(path);
    if (raw.version != 1)
        throw IoError("container: expected a version-1 checkpoint in " + path + ", found version " +
                      std::to_string(raw.version));
    return {raw.arch, raw.rows.row(0)};
}

void save_matrix_container(const std::string& path, const ArchitectureSpec& arch,
                           const Json& meta, const Mat& rows) {
    write_container(path, 2, arch, meta, rows);
}

MatrixContainer load_matrix_container(const std::string& path) {
    RawContainer raw = read_container(path);
    if (raw.version != 2)
        throw IoError("container: expected a version-2 sample file in " + path +
                      ", found version " + std::to_string(raw.version));
    MatrixContainer mc;
    mc.arch = raw.arch;
    mc.meta = raw.descriptor;
    mc.meta.erase("arch");
    mc.rows = std::move(raw.rows);
    return mc;
}

}  // namespace projpost
