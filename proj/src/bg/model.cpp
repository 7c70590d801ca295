#include "downscaler/bg/model.hpp"

#include <algorithm>
#include <cmath>

#include "downscaler/error.hpp"
#include "downscaler/mathx.hpp"
#include "downscaler/nn/adam.hpp"
#include "downscaler/threading.hpp"

namespace downscaler::bg {

namespace {

constexpr std::uint64_t kTagInit = 0x42494e49;
constexpr std::uint64_t kTagShuffle = 0x42534855;
constexpr int kGradChunks = 8;
constexpr float kArchKindBaseline = 1.0f;
constexpr float kPositivityFloor = 1e-4f;
constexpr double kLogFloor = 1e-6;

std::vector<nn::LayerSpec> trunk_specs(const BaselineConfig& c) {
    std::vector<nn::LayerSpec> s;
    for (int ch : c.conv_channels) {
        s.push_back(nn::LayerSpec::conv2d(ch, 3));
        s.push_back(nn::LayerSpec::relu());
    }
    s.push_back(nn::LayerSpec::flatten());
    return s;
}

} // namespace

void BaselineConfig::validate() const {
    auto bad = [](const std::string& msg) { throw ConfigError("baseline config: " + msg); };
    if (channels < 1) bad("channels must be >= 1");
    if (coarse_height < 1 || coarse_width < 1) bad("coarse extents must be >= 1");
    if (conv_channels.empty()) bad("conv_channels must be non-empty");
}

double bg_nll(double y, double p, double alpha, double beta, double wet_threshold) {
    if (!(p > 0.0) || !(p < 1.0))
        throw NumericError("bg_nll: p must be in (0,1), got " + std::to_string(p));
    if (!(alpha > 0.0) || !(beta > 0.0))
        throw NumericError("bg_nll: alpha and beta must be > 0, got alpha=" +
                           std::to_string(alpha) + " beta=" + std::to_string(beta));
    if (!(y >= 0.0)) throw NumericError("bg_nll: y must be >= 0, got " + std::to_string(y));

    if (y < wet_threshold) return -std::log1p(-p);
    const double ln_y = std::log(std::fmax(y, kLogFloor));
    return -(std::log(p) + (alpha - 1.0) * ln_y - y / beta - alpha * std::log(beta) -
             log_gamma(alpha));
}

void bg_nll_grad(double y, double p, double alpha, double beta, double wet_threshold,
                 double& d_p, double& d_alpha, double& d_beta) {
    if (y < wet_threshold) {
        d_p = 1.0 / (1.0 - p);
        d_alpha = 0.0;
        d_beta = 0.0;
        return;
    }
    const double ln_y = std::log(std::fmax(y, kLogFloor));
    d_p = -1.0 / p;
    d_alpha = digamma(alpha) + std::log(beta) - ln_y;
    d_beta = alpha / beta - y / (beta * beta);
}

double gamma_sample(RandomStream& rs, double alpha, double scale) {
    if (!(alpha > 0.0) || !(scale > 0.0))
        throw NumericError("gamma_sample: alpha and scale must be > 0");
    if (alpha < 1.0) {
        const double boost = std::pow(rs.uniform_pos(), 1.0 / alpha);
        return gamma_sample(rs, alpha + 1.0, scale) * boost;
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rs.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rs.uniform_pos();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
}

Tensor sample_bg_field(const BernoulliGammaField& field, const RandomStream& stream) {
    if (!field.p.same_shape(field.alpha) || !field.p.same_shape(field.beta))
        throw ShapeError("sample_bg_field: parameter field shapes disagree: p " +
                         shape_to_string(field.p.shape) + ", alpha " +
                         shape_to_string(field.alpha.shape) + ", beta " +
                         shape_to_string(field.beta.shape));
    Tensor out(field.p.shape);
    for (std::size_t s = 0; s < out.size(); ++s) {
        RandomStream site = stream.substream(s);
        if (site.uniform() < field.p.data[s])
            out.data[s] = static_cast<float>(
                gamma_sample(site, field.alpha.data[s], field.beta.data[s]));
        else
            out.data[s] = 0.0f;
    }
    return out;
}

void BgGrads::clear() {
    trunk.clear();
    head_p.clear();
    head_alpha.clear();
    head_beta.clear();
}

namespace {

void add_net(nn::NetworkGrads& into, const nn::NetworkGrads& from) {
    for (std::size_t i = 0; i < into.layers.size(); ++i) {
        for (std::size_t j = 0; j < into.layers[i].weight.size(); ++j)
            into.layers[i].weight.data[j] += from.layers[i].weight.data[j];
        for (std::size_t j = 0; j < into.layers[i].bias.size(); ++j)
            into.layers[i].bias.data[j] += from.layers[i].bias.data[j];
    }
}

void scale_net(nn::NetworkGrads& g, float s) {
    for (auto& l : g.layers) {
        for (float& v : l.weight.data) v *= s;
        for (float& v : l.bias.data) v *= s;
    }
}

} // namespace

void BgGrads::add(const BgGrads& other) {
    add_net(trunk, other.trunk);
    add_net(head_p, other.head_p);
    add_net(head_alpha, other.head_alpha);
    add_net(head_beta, other.head_beta);
}

void BgGrads::scale(float s) {
    scale_net(trunk, s);
    scale_net(head_p, s);
    scale_net(head_alpha, s);
    scale_net(head_beta, s);
}

BaselineModel::BaselineModel(BaselineConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      trunk_("bg_trunk", {cfg.channels, cfg.coarse_height, cfg.coarse_width}, trunk_specs(cfg)),
      head_p_("bg_p", {cfg.conv_channels.back() * cfg.coarse_height * cfg.coarse_width},
              {nn::LayerSpec::dense(cfg.fine_height() * cfg.fine_width())}),
      head_alpha_("bg_alpha", {cfg.conv_channels.back() * cfg.coarse_height * cfg.coarse_width},
                  {nn::LayerSpec::dense(cfg.fine_height() * cfg.fine_width())}),
      head_beta_("bg_beta", {cfg.conv_channels.back() * cfg.coarse_height * cfg.coarse_width},
                 {nn::LayerSpec::dense(cfg.fine_height() * cfg.fine_width())}) {}

void BaselineModel::init_params(std::uint64_t seed) {
    RandomStream rs(seed, {kTagInit});
    trunk_.init_params(rs);
    head_p_.init_params(rs);
    head_alpha_.init_params(rs);
    head_beta_.init_params(rs);
}

BernoulliGammaField BaselineModel::forward(const Tensor& x) const {
    const Tensor feat = trunk_.forward(x);
    const Tensor up = head_p_.forward(feat);
    const Tensor ua = head_alpha_.forward(feat);
    const Tensor ub = head_beta_.forward(feat);

    const int hf = cfg_.fine_height(), wf = cfg_.fine_width();
    BernoulliGammaField f;
    f.p = Tensor({hf, wf});
    f.alpha = Tensor({hf, wf});
    f.beta = Tensor({hf, wf});
    for (std::size_t i = 0; i < f.p.size(); ++i) {
        f.p.data[i] = std::clamp(sigmoid_f(up.data[i]), 1e-7f, 1.0f - 1e-7f);
        f.alpha.data[i] = softplus_f(ua.data[i]) + kPositivityFloor;
        f.beta.data[i] = softplus_f(ub.data[i]) + kPositivityFloor;
    }
    return f;
}

double BaselineModel::nll_with_grads(const Tensor& x, const Tensor& y, double wet_threshold,
                                     BgGrads* grads, double* relu_margin) const {
    const int hf = cfg_.fine_height(), wf = cfg_.fine_width();
    require_shape(x, {cfg_.channels, cfg_.coarse_height, cfg_.coarse_width}, "baseline X");
    require_shape(y, {hf, wf}, "baseline Y");

    nn::Network::Trace trunk_tr, p_tr, a_tr, b_tr;
    const Tensor feat = trunk_.forward(x, trunk_tr);
    const Tensor up = head_p_.forward(feat, p_tr);
    const Tensor ua = head_alpha_.forward(feat, a_tr);
    const Tensor ub = head_beta_.forward(feat, b_tr);
    if (relu_margin) *relu_margin = trunk_.relu_input_margin(trunk_tr);

    const std::size_t n = static_cast<std::size_t>(hf) * wf;
    const double inv_n = 1.0 / static_cast<double>(n);
    const int n_sites = hf * wf;

    Tensor dup({n_sites}), dua({n_sites}), dub({n_sites});
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double yv = y.data[s];
        const double u = up.data[s];
        if (yv < wet_threshold) {
            // -ln(1-p) with p = sigmoid(u), evaluated in the logit domain.
            loss += softplus(u);
            if (grads) dup.data[s] = static_cast<float>(sigmoid(u) * inv_n);
        } else {
            const double alpha = softplus(ua.data[s]) + kPositivityFloor;
            const double beta = softplus(ub.data[s]) + kPositivityFloor;
            const double ln_y = std::log(std::fmax(yv, kLogFloor));
            loss += softplus(-u) - (alpha - 1.0) * ln_y + yv / beta + alpha * std::log(beta) +
                    log_gamma(alpha);
            if (grads) {
                const double d_alpha = digamma(alpha) + std::log(beta) - ln_y;
                const double d_beta = alpha / beta - yv / (beta * beta);
                dup.data[s] = static_cast<float>(-sigmoid(-u) * inv_n);
                dua.data[s] = static_cast<float>(d_alpha * sigmoid(ua.data[s]) * inv_n);
                dub.data[s] = static_cast<float>(d_beta * sigmoid(ub.data[s]) * inv_n);
            }
        }
    }
    loss *= inv_n;
    if (!grads) return loss;

    Tensor dfeat_p, dfeat_a, dfeat_b;
    head_p_.backward(p_tr, dup, grads->head_p, &dfeat_p);
    head_alpha_.backward(a_tr, dua, grads->head_alpha, &dfeat_a);
    head_beta_.backward(b_tr, dub, grads->head_beta, &dfeat_b);
    for (std::size_t i = 0; i < dfeat_p.size(); ++i)
        dfeat_p.data[i] += dfeat_a.data[i] + dfeat_b.data[i];
    trunk_.backward(trunk_tr, dfeat_p, grads->trunk, nullptr);
    return loss;
}

BgGrads BaselineModel::make_grads() const {
    BgGrads g;
    g.trunk = trunk_.make_grads();
    g.head_p = head_p_.make_grads();
    g.head_alpha = head_alpha_.make_grads();
    g.head_beta = head_beta_.make_grads();
    return g;
}

std::vector<nn::ParamBinding> BaselineModel::bind(BgGrads& grads) {
    std::vector<nn::ParamBinding> refs;
    for (auto& r : trunk_.bind(grads.trunk)) refs.push_back(r);
    for (auto& r : head_p_.bind(grads.head_p)) refs.push_back(r);
    for (auto& r : head_alpha_.bind(grads.head_alpha)) refs.push_back(r);
    for (auto& r : head_beta_.bind(grads.head_beta)) refs.push_back(r);
    return refs;
}

std::vector<io::NamedTensor> BaselineModel::to_named_tensors() const {
    std::vector<float> arch = {kArchKindBaseline,
                               static_cast<float>(cfg_.channels),
                               static_cast<float>(cfg_.coarse_height),
                               static_cast<float>(cfg_.coarse_width),
                               static_cast<float>(cfg_.conv_channels.size())};
    for (int c : cfg_.conv_channels) arch.push_back(static_cast<float>(c));

    std::vector<io::NamedTensor> out;
    out.push_back({"meta/arch", Tensor({static_cast<int>(arch.size())}, arch)});
    for (const nn::Network* net : {&trunk_, &head_p_, &head_alpha_, &head_beta_})
        for (auto& [name, value] : net->named_params()) out.push_back({name, *value});
    return out;
}

BaselineModel BaselineModel::from_named_tensors(const std::vector<io::NamedTensor>& tensors,
                                                const std::string& source) {
    const Tensor& arch = io::require_tensor(tensors, "meta/arch", source);
    std::size_t i = 0;
    auto next = [&]() -> int {
        if (i >= arch.size()) throw DataError(source + ": truncated meta/arch tensor");
        return static_cast<int>(arch.data[i++]);
    };
    if (next() != static_cast<int>(kArchKindBaseline))
        throw DataError(source + ": checkpoint is not a baseline model");
    BaselineConfig cfg;
    cfg.channels = next();
    cfg.coarse_height = next();
    cfg.coarse_width = next();
    cfg.conv_channels.assign(static_cast<std::size_t>(next()), 0);
    for (int& c : cfg.conv_channels) c = next();

    BaselineModel model(cfg);
    BgGrads scratch = model.make_grads();
    for (auto& r : model.bind(scratch)) {
        const Tensor& t = io::require_tensor(tensors, r.name, source);
        require_shape(t, r.value->shape, source + " tensor " + r.name);
        *r.value = t;
    }
    return model;
}

std::vector<double> train_baseline(BaselineModel& model, const synth::DownscalingDataset& data,
                                   const BaselineTrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw ConfigError("train: epochs and batch_size must be >= 1");
    const BaselineConfig& mc = model.config();
    if (data.channels() != mc.channels || data.coarse_height() != mc.coarse_height ||
        data.coarse_width() != mc.coarse_width)
        throw ShapeError("train: dataset grid " +
                         shape_to_string({data.channels(), data.coarse_height(),
                                          data.coarse_width()}) +
                         " does not match model " +
                         shape_to_string({mc.channels, mc.coarse_height, mc.coarse_width}));

    const int n_train = data.split_index;
    const int hf = mc.fine_height(), wf = mc.fine_width();
    const std::size_t xs = static_cast<std::size_t>(mc.channels) * mc.coarse_height *
                           mc.coarse_width;
    const std::size_t ys = static_cast<std::size_t>(hf) * wf;

    BgGrads master = model.make_grads();
    std::vector<BgGrads> chunk_grads;
    for (int c = 0; c < kGradChunks; ++c) chunk_grads.push_back(model.make_grads());

    auto bindings = model.bind(master);
    std::vector<Tensor*> params;
    std::vector<const Tensor*> grads;
    for (auto& b : bindings) {
        params.push_back(b.value);
        grads.push_back(b.grad);
    }
    nn::AdamState adam{std::vector<const Tensor*>(params.begin(), params.end())};
    nn::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;

    std::vector<int> order(static_cast<std::size_t>(n_train));
    for (int i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RandomStream shuffle_rs(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)});
        for (int i = n_train - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[shuffle_rs.below(static_cast<std::uint32_t>(i + 1))]);

        double epoch_loss = 0.0;
        double weight = 0.0;
        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int bn = std::min(cfg.batch_size, n_train - start);
            master.clear();
            std::vector<double> chunk_sums(kGradChunks, 0.0);
            for (auto& g : chunk_grads) g.clear();

            parallel_chunks(static_cast<std::size_t>(bn), kGradChunks,
                            [&](int chunk, std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) {
                    const int t = order[static_cast<std::size_t>(start) + i];
                    Tensor x({mc.channels, mc.coarse_height, mc.coarse_width});
                    std::copy_n(data.X.ptr() + static_cast<std::size_t>(t) * xs, xs,
                                x.data.begin());
                    Tensor y({hf, wf});
                    std::copy_n(data.Y.ptr() + static_cast<std::size_t>(t) * ys, ys,
                                y.data.begin());
                    chunk_sums[static_cast<std::size_t>(chunk)] += model.nll_with_grads(
                        x, y, cfg.wet_threshold, &chunk_grads[static_cast<std::size_t>(chunk)]);
                }
            });

            double batch_sum = 0.0;
            for (int c = 0; c < kGradChunks; ++c) {
                master.add(chunk_grads[static_cast<std::size_t>(c)]);
                batch_sum += chunk_sums[static_cast<std::size_t>(c)];
            }
            if (!std::isfinite(batch_sum))
                throw NumericError("baseline training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(start / cfg.batch_size));
            master.scale(1.0f / static_cast<float>(bn));
            adam.update(params, grads, adam_cfg);
            epoch_loss += batch_sum;
            weight += bn;
        }
        history.push_back(epoch_loss / weight);
    }
    return history;
}

} // namespace downscaler::bg
