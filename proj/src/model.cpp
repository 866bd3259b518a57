#include "ramp/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ramp/errors.hpp"
#include "ramp/rng.hpp"

namespace ramp {

MlpModel MlpModel::init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("model needs at least input and output dims");
    for (std::size_t d : dims) {
        if (d == 0) throw std::invalid_argument("model dimensions must be positive");
    }
    Rng rng(mix64(seed, 0x6d6f64656cull));  // distinct stream per model seed
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        const bool last = (l + 2 == dims.size());
        const Activation act = last ? Activation::Identity : Activation::Relu;
        const double limit = last ? std::sqrt(6.0 / static_cast<double>(in + out))
                                  : std::sqrt(6.0 / static_cast<double>(in));
        std::vector<double> w(out * in);
        for (double& v : w) v = rng.uniform(-limit, limit);
        Layer layer;
        layer.name = "fc" + std::to_string(l + 1);
        layer.weight = Tensor::from_data({out, in}, std::move(w), true);
        layer.bias = Tensor::zeros({out}, true);
        layer.act = act;
        layers.push_back(std::move(layer));
    }
    return from_layers(std::move(layers));
}

MlpModel MlpModel::from_layers(std::vector<Layer> layers) {
    if (layers.empty()) throw std::invalid_argument("model needs at least one layer");
    std::set<std::string> names;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        if (!names.insert(layer.name).second) {
            throw std::invalid_argument("duplicate layer name: " + layer.name);
        }
        if (layer.bias.size() != layer.weight.rows()) {
            throw ShapeError("layer " + layer.name + ": bias length " +
                             std::to_string(layer.bias.size()) + " vs weight rows " +
                             std::to_string(layer.weight.rows()));
        }
        if (l > 0 && layers[l - 1].weight.rows() != layer.weight.cols()) {
            throw ShapeError("layer " + layer.name + ": input width " +
                             std::to_string(layer.weight.cols()) + " does not chain with previous output " +
                             std::to_string(layers[l - 1].weight.rows()));
        }
    }
    if (layers.back().act != Activation::Identity) {
        throw std::invalid_argument("final layer must emit raw logits");
    }
    MlpModel m;
    m.input_dim_ = layers.front().weight.cols();
    m.num_classes_ = layers.back().weight.rows();
    m.layers_ = std::move(layers);
    return m;
}

void MlpModel::check_batch(const Tensor& batch) const {
    if (batch.shape().size() != 2 || batch.cols() != input_dim_) {
        throw ShapeError("batch shape " + shape_str(batch.shape()) + " does not match input_dim " +
                         std::to_string(input_dim_));
    }
}

Tensor MlpModel::forward_impl(const Tensor& batch, bool params_in_graph) const {
    check_batch(batch);
    Tensor h = batch;
    for (const Layer& layer : layers_) {
        const Tensor w = params_in_graph ? layer.weight : layer.weight.detach();
        const Tensor b = params_in_graph ? layer.bias : layer.bias.detach();
        h = affine(h, w, b);
        if (layer.act == Activation::Relu) h = relu(h);
    }
    return h;
}

Tensor MlpModel::forward(const Tensor& batch) const { return forward_impl(batch, true); }

Tensor MlpModel::forward_input_grad(const Tensor& batch) const { return forward_impl(batch, false); }

std::vector<double> MlpModel::forward_values(const Tensor& batch) const {
    check_batch(batch);
    const std::size_t n = batch.rows();
    std::vector<double> h = batch.values();
    std::size_t width = input_dim_;
    for (const Layer& layer : layers_) {
        const std::size_t out = layer.weight.rows();
        const auto& wv = layer.weight.values();
        const auto& bv = layer.bias.values();
        std::vector<double> next(n * out);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < out; ++o) {
                double acc = bv[o];
                const double* hr = h.data() + i * width;
                const double* wr = wv.data() + o * width;
                for (std::size_t j = 0; j < width; ++j) acc += hr[j] * wr[j];
                next[i * out + o] = (layer.act == Activation::Relu && acc < 0.0) ? 0.0 : acc;
            }
        }
        h = std::move(next);
        width = out;
    }
    return h;
}

std::vector<Tensor> MlpModel::parameters() const {
    std::vector<Tensor> out;
    out.reserve(layers_.size() * 2);
    for (const Layer& layer : layers_) {
        out.push_back(layer.weight);
        out.push_back(layer.bias);
    }
    return out;
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

void MlpModel::zero_grad() const {
    for (Tensor p : parameters()) p.zero_grad();
}

std::vector<double> MlpModel::flat_grad() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const Tensor& p : parameters()) {
        const auto& g = p.grad();
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

MlpModel MlpModel::clone() const {
    std::vector<Layer> copies;
    copies.reserve(layers_.size());
    for (const Layer& layer : layers_) {
        Layer c;
        c.name = layer.name;
        c.weight = Tensor::from_data(layer.weight.shape(), layer.weight.values(), true);
        c.bias = Tensor::from_data(layer.bias.shape(), layer.bias.values(), true);
        c.act = layer.act;
        copies.push_back(std::move(c));
    }
    return from_layers(std::move(copies));
}

bool MlpModel::same_architecture(const MlpModel& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& a = layers_[l];
        const Layer& b = other.layers_[l];
        if (a.name != b.name || a.act != b.act) return false;
        if (a.weight.shape() != b.weight.shape() || a.bias.shape() != b.bias.shape()) return false;
    }
    return true;
}

// ---- SGD -------------------------------------------------------------------

SgdOptimizer::SgdOptimizer(SgdConfig cfg) : cfg_(cfg) {
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be > 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

void SgdOptimizer::step(MlpModel& model) {
    std::vector<Tensor> params = model.parameters();
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i].size(), 0.0);
    }
    if (velocity_.size() != params.size()) {
        throw std::invalid_argument("optimizer bound to a different architecture");
    }
    for (const Tensor& p : params) {
        if (!p.grad_populated()) {
            throw std::runtime_error("sgd step with missing gradients; run backward first");
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        const auto& g = p.grad();
        auto& theta = p.values_mut();
        auto& v = velocity_[i];
        if (v.size() != theta.size()) throw std::invalid_argument("optimizer state size mismatch");
        for (std::size_t j = 0; j < theta.size(); ++j) {
            v[j] = cfg_.momentum * v[j] + g[j] + cfg_.weight_decay * theta[j];
            theta[j] -= cfg_.learning_rate * v[j];
        }
    }
}

// ---- model deltas ------------------------------------------------------------

bool ModelDelta::same_layout(const ModelDelta& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].first != other.entries[i].first) return false;
        if (entries[i].second.size() != other.entries[i].second.size()) return false;
    }
    return true;
}

std::size_t ModelDelta::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, v] : entries) n += v.size();
    return n;
}

ModelDelta model_delta(const MlpModel& after, const MlpModel& before) {
    if (!after.same_architecture(before)) {
        throw ShapeError("model_delta: architectures do not match");
    }
    ModelDelta d;
    for (std::size_t l = 0; l < after.layers().size(); ++l) {
        const Layer& a = after.layers()[l];
        const Layer& b = before.layers()[l];
        std::vector<double> dw(a.weight.size());
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] = a.weight.values()[i] - b.weight.values()[i];
        std::vector<double> db(a.bias.size());
        for (std::size_t i = 0; i < db.size(); ++i) db[i] = a.bias.values()[i] - b.bias.values()[i];
        d.entries.emplace_back(a.name + ".weight", std::move(dw));
        d.entries.emplace_back(a.name + ".bias", std::move(db));
    }
    return d;
}

MlpModel apply_delta(const MlpModel& base, const ModelDelta& delta) {
    if (delta.entries.size() != base.layers().size() * 2) {
        throw ShapeError("apply_delta: delta has " + std::to_string(delta.entries.size()) +
                         " entries for " + std::to_string(base.layers().size()) + " layers");
    }
    MlpModel out = base.clone();
    for (std::size_t l = 0; l < out.layers().size(); ++l) {
        Layer& layer = out.layers_mut()[l];
        const auto& [wname, wdelta] = delta.entries[2 * l];
        const auto& [bname, bdelta] = delta.entries[2 * l + 1];
        if (wname != layer.name + ".weight" || bname != layer.name + ".bias" ||
            wdelta.size() != layer.weight.size() || bdelta.size() != layer.bias.size()) {
            throw ShapeError("apply_delta: entry mismatch at layer " + layer.name);
        }
        auto& wv = layer.weight.values_mut();
        for (std::size_t i = 0; i < wv.size(); ++i) wv[i] += wdelta[i];
        auto& bv = layer.bias.values_mut();
        for (std::size_t i = 0; i < bv.size(); ++i) bv[i] += bdelta[i];
    }
    return out;
}

// ---- checkpoint io -----------------------------------------------------------
//
// magic "RAMPCKPT" | u32 version=1 | u32 layer count | per layer:
//   u16 name length | name bytes | u32 rows | u32 cols |
//   rows*cols f64 weights (row-major) | rows f64 biases
// all integers and doubles little-endian.

namespace {

constexpr char kMagic[8] = {'R', 'A', 'M', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
    const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw ParseError(std::string("checkpoint truncated while reading ") + what, pos);
        }
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(model.layers().size()));
    for (const Layer& layer : model.layers()) {
        if (layer.name.size() > 0xffff) throw std::invalid_argument("layer name too long for checkpoint");
        put_u16(buf, static_cast<std::uint16_t>(layer.name.size()));
        buf.append(layer.name);
        put_u32(buf, static_cast<std::uint32_t>(layer.weight.rows()));
        put_u32(buf, static_cast<std::uint32_t>(layer.weight.cols()));
        for (double v : layer.weight.values()) put_f64(buf, v);
        for (double v : layer.bias.values()) put_f64(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf};

    r.need(sizeof(kMagic), "magic");
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("bad checkpoint magic, expected \"RAMPCKPT\"", 0);
    }
    r.pos = sizeof(kMagic);
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version), r.pos - 4);
    }
    const std::uint32_t layer_count = r.u32("layer count");
    if (layer_count == 0) throw ParseError("checkpoint has zero layers", r.pos - 4);

    std::vector<Layer> layers;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        Layer layer;
        const std::uint16_t name_len = r.u16("name length");
        layer.name = r.bytes(name_len, "layer name");
        const std::uint32_t rows = r.u32("rows");
        const std::uint32_t cols = r.u32("cols");
        if (rows == 0 || cols == 0) throw ParseError("zero layer dimension", r.pos - 4);
        std::vector<double> w(static_cast<std::size_t>(rows) * cols);
        for (double& v : w) v = r.f64("weights");
        std::vector<double> b(rows);
        for (double& v : b) v = r.f64("biases");
        layer.weight = Tensor::from_data({rows, cols}, std::move(w), true);
        layer.bias = Tensor::from_data({rows}, std::move(b), true);
        // the format stores no activation tag; hidden layers are relu, the
        // last layer identity, matching how models are built
        layer.act = (l + 1 == layer_count) ? Activation::Identity : Activation::Relu;
        layers.push_back(std::move(layer));
    }
    if (r.pos != buf.size()) {
        throw ParseError("trailing bytes after checkpoint payload", r.pos);
    }
    return MlpModel::from_layers(std::move(layers));
}

}  // namespace ramp
