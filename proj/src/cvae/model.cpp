#include "downscaler/cvae/model.hpp"

#include <algorithm>
#include <cmath>

#include "downscaler/error.hpp"
#include "downscaler/threading.hpp"

namespace downscaler::cvae {

namespace {

constexpr std::uint64_t kTagInit = 0x494e4954;    // param init
constexpr std::uint64_t kTagShuffle = 0x53485546; // epoch shuffle
constexpr std::uint64_t kTagEps = 0x45505321;     // reparameterization noise

constexpr int kGradChunks = 8;
constexpr float kArchKindCvae = 0.0f;

std::vector<nn::LayerSpec> embed_specs(const CvaeConfig& c) {
    std::vector<nn::LayerSpec> s;
    for (int ch : c.embed_channels) {
        s.push_back(nn::LayerSpec::conv2d(ch, 3));
        s.push_back(nn::LayerSpec::relu());
    }
    s.push_back(nn::LayerSpec::flatten());
    s.push_back(nn::LayerSpec::dense(c.embedding_dim));
    return s;
}

std::vector<nn::LayerSpec> encoder_specs(const CvaeConfig& c) {
    std::vector<nn::LayerSpec> s;
    for (int ch : c.encoder_channels) {
        s.push_back(nn::LayerSpec::conv2d(ch, 3));
        s.push_back(nn::LayerSpec::relu());
    }
    s.push_back(nn::LayerSpec::flatten());
    return s;
}

std::vector<nn::LayerSpec> decoder_specs(const CvaeConfig& c) {
    std::vector<nn::LayerSpec> s;
    s.push_back(nn::LayerSpec::dense(c.decoder_base_channels * c.coarse_height * c.coarse_width));
    s.push_back(nn::LayerSpec::relu());
    s.push_back(nn::LayerSpec::reshape({c.decoder_base_channels, c.coarse_height, c.coarse_width}));
    for (int ch : c.decoder_channels) {
        s.push_back(nn::LayerSpec::upsample2x());
        s.push_back(nn::LayerSpec::conv2d(ch, 3));
        s.push_back(nn::LayerSpec::relu());
    }
    s.push_back(nn::LayerSpec::conv2d(1, 1));
    return s;
}

int encoder_feat_len(const CvaeConfig& c) {
    return c.encoder_channels.back() * c.fine_height() * c.fine_width();
}

Tensor log1p_field(const Tensor& y) {
    Tensor t = y;
    for (float& v : t.data) v = std::log1p(std::fmax(v, 0.0f));
    return t;
}

} // namespace

void CvaeConfig::validate() const {
    auto bad = [](const std::string& msg) { throw ConfigError("cvae config: " + msg); };
    if (channels < 1) bad("channels must be >= 1");
    if (coarse_height < 1 || coarse_width < 1) bad("coarse extents must be >= 1");
    if (latent_dim < 1) bad("latent_dim must be >= 1");
    if (embedding_dim < 1) bad("embedding_dim must be >= 1");
    if (embed_channels.empty() || encoder_channels.empty() || decoder_channels.size() != 2)
        bad("width lists must be non-empty (decoder has exactly two upsampling stages)");
    if (decoder_base_channels < 1) bad("decoder_base_channels must be >= 1");
}

void CvaeGrads::clear() {
    embed.clear();
    encoder.clear();
    head_mu.clear();
    head_logvar.clear();
    decoder.clear();
}

namespace {

void add_grads(nn::NetworkGrads& into, const nn::NetworkGrads& from) {
    for (std::size_t i = 0; i < into.layers.size(); ++i) {
        for (std::size_t j = 0; j < into.layers[i].weight.size(); ++j)
            into.layers[i].weight.data[j] += from.layers[i].weight.data[j];
        for (std::size_t j = 0; j < into.layers[i].bias.size(); ++j)
            into.layers[i].bias.data[j] += from.layers[i].bias.data[j];
    }
}

void scale_grads(nn::NetworkGrads& g, float s) {
    for (auto& l : g.layers) {
        for (float& v : l.weight.data) v *= s;
        for (float& v : l.bias.data) v *= s;
    }
}

} // namespace

void CvaeGrads::add(const CvaeGrads& other) {
    add_grads(embed, other.embed);
    add_grads(encoder, other.encoder);
    add_grads(head_mu, other.head_mu);
    add_grads(head_logvar, other.head_logvar);
    add_grads(decoder, other.decoder);
}

void CvaeGrads::scale(float s) {
    scale_grads(embed, s);
    scale_grads(encoder, s);
    scale_grads(head_mu, s);
    scale_grads(head_logvar, s);
    scale_grads(decoder, s);
}

CvaeModel::CvaeModel(CvaeConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      embed_("embed", {cfg.channels, cfg.coarse_height, cfg.coarse_width}, embed_specs(cfg)),
      encoder_("enc", {1, cfg.fine_height(), cfg.fine_width()}, encoder_specs(cfg)),
      head_mu_("enc_mu", {encoder_feat_len(cfg) + cfg.embedding_dim},
               {nn::LayerSpec::dense(cfg.latent_dim)}),
      head_logvar_("enc_logvar", {encoder_feat_len(cfg) + cfg.embedding_dim},
                   {nn::LayerSpec::dense(cfg.latent_dim)}),
      decoder_("dec", {cfg.latent_dim + cfg.embedding_dim}, decoder_specs(cfg)) {}

void CvaeModel::init_params(std::uint64_t seed) {
    RandomStream rs(seed, {kTagInit});
    embed_.init_params(rs);
    encoder_.init_params(rs);
    head_mu_.init_params(rs);
    head_logvar_.init_params(rs);
    decoder_.init_params(rs);
}

Tensor CvaeModel::embed_predictors(const Tensor& x) const { return embed_.forward(x); }

GaussianLatent CvaeModel::encode(const Tensor& z_x, const Tensor& y) const {
    require_shape(z_x, {cfg_.embedding_dim}, "encode z_x");
    require_shape(y, {cfg_.fine_height(), cfg_.fine_width()}, "encode Y");

    Tensor y1 = log1p_field(y);
    y1.shape = {1, cfg_.fine_height(), cfg_.fine_width()};
    const Tensor feat = encoder_.forward(y1);
    const Tensor h = nn::concat(feat, z_x);

    GaussianLatent lat;
    lat.mu = head_mu_.forward(h);
    lat.log_var = head_logvar_.forward(h);
    lat.sigma = Tensor({cfg_.latent_dim});
    for (int j = 0; j < cfg_.latent_dim; ++j) {
        float lv = std::clamp(lat.log_var.data[j], kLogVarMin, kLogVarMax);
        lat.log_var.data[j] = lv;
        lat.sigma.data[j] = std::exp(0.5f * lv);
    }
    return lat;
}

Tensor CvaeModel::reparameterize(const GaussianLatent& lat, const Tensor& eps) {
    require_shape(eps, lat.mu.shape, "reparameterize eps");
    Tensor z = lat.mu;
    for (std::size_t j = 0; j < z.size(); ++j) z.data[j] += lat.sigma.data[j] * eps.data[j];
    return z;
}

double CvaeModel::kl_divergence(const GaussianLatent& lat) {
    double kl = 0.0;
    for (std::size_t j = 0; j < lat.mu.size(); ++j) {
        const double mu = lat.mu.data[j];
        const double lv = lat.log_var.data[j];
        kl += mu * mu + std::exp(lv) - 1.0 - lv;
    }
    return std::fmax(0.5 * kl, 0.0);
}

Tensor CvaeModel::decode(const Tensor& z, const Tensor& z_x) const {
    require_shape(z, {cfg_.latent_dim}, "decode z");
    require_shape(z_x, {cfg_.embedding_dim}, "decode z_x");
    Tensor out = decoder_.forward(nn::concat(z, z_x));
    out.shape = {cfg_.fine_height(), cfg_.fine_width()};
    return out;
}

Tensor CvaeModel::to_physical(const Tensor& transformed) {
    Tensor out = transformed;
    for (float& v : out.data) v = std::fmax(std::expm1(std::fmin(v, 30.0f)), 0.0f);
    return out;
}

ElboParts CvaeModel::elbo_loss(const Tensor& y, const Tensor& y_hat_transformed,
                               const GaussianLatent& lat, double beta_kl) {
    if (!y.same_shape(y_hat_transformed))
        throw ShapeError("elbo_loss: Y shape " + shape_to_string(y.shape) +
                         " != reconstruction shape " + shape_to_string(y_hat_transformed.shape));
    if (beta_kl < 0.0) throw NumericError("elbo_loss: beta_kl must be >= 0");
    double se = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y_hat_transformed.data[i]) -
                         std::log1p(std::fmax(static_cast<double>(y.data[i]), 0.0));
        se += d * d;
    }
    ElboParts parts;
    parts.recon = se / static_cast<double>(y.size());
    parts.kl = kl_divergence(lat);
    parts.total = parts.recon + beta_kl * parts.kl;
    return parts;
}

ElboParts CvaeModel::elbo_with_grads(const Tensor& x, const Tensor& y_log1p, const Tensor& eps,
                                     double beta_kl, CvaeGrads* grads,
                                     double* relu_margin) const {
    const int hf = cfg_.fine_height(), wf = cfg_.fine_width();
    require_shape(x, {cfg_.channels, cfg_.coarse_height, cfg_.coarse_width}, "cvae X");
    require_shape(y_log1p, {hf, wf}, "cvae Y (log1p)");
    require_shape(eps, {cfg_.latent_dim}, "cvae eps");

    // Forward.
    nn::Network::Trace embed_tr, enc_tr, mu_tr, lv_tr, dec_tr;
    const Tensor z_x = embed_.forward(x, embed_tr);

    Tensor y1 = y_log1p;
    y1.shape = {1, hf, wf};
    const Tensor feat = encoder_.forward(y1, enc_tr);
    const Tensor h = nn::concat(feat, z_x);

    GaussianLatent lat;
    lat.mu = head_mu_.forward(h, mu_tr);
    const Tensor lv_raw = head_logvar_.forward(h, lv_tr);
    lat.log_var = lv_raw;
    lat.sigma = Tensor({cfg_.latent_dim});
    for (int j = 0; j < cfg_.latent_dim; ++j) {
        const float lv = std::clamp(lat.log_var.data[j], kLogVarMin, kLogVarMax);
        lat.log_var.data[j] = lv;
        lat.sigma.data[j] = std::exp(0.5f * lv);
    }
    const Tensor z = reparameterize(lat, eps);
    const Tensor dec_in = nn::concat(z, z_x);
    const Tensor out = decoder_.forward(dec_in, dec_tr);

    const std::size_t npix = static_cast<std::size_t>(hf) * wf;
    double se = 0.0;
    for (std::size_t i = 0; i < npix; ++i) {
        const double d = static_cast<double>(out.data[i]) - y_log1p.data[i];
        se += d * d;
    }
    ElboParts parts;
    parts.recon = se / static_cast<double>(npix);
    parts.kl = kl_divergence(lat);
    parts.total = parts.recon + beta_kl * parts.kl;

    if (relu_margin) {
        double m = embed_.relu_input_margin(embed_tr);
        m = std::min(m, encoder_.relu_input_margin(enc_tr));
        m = std::min(m, decoder_.relu_input_margin(dec_tr));
        *relu_margin = m;
    }
    if (!grads) return parts;

    // Backward.
    Tensor dout({1, hf, wf});
    const float inv_npix = 2.0f / static_cast<float>(npix);
    for (std::size_t i = 0; i < npix; ++i)
        dout.data[i] = inv_npix * (out.data[i] - y_log1p.data[i]);

    Tensor ddec_in;
    decoder_.backward(dec_tr, dout, grads->decoder, &ddec_in);

    Tensor dz, dzx_dec;
    nn::concat_backward(ddec_in, static_cast<std::size_t>(cfg_.latent_dim), dz, dzx_dec);

    // z = mu + exp(lv/2) * eps; KL adds beta * (mu, (exp(lv) - 1)/2).
    Tensor dmu = dz;
    Tensor dlv({cfg_.latent_dim});
    const float beta = static_cast<float>(beta_kl);
    for (int j = 0; j < cfg_.latent_dim; ++j) {
        dlv.data[j] = 0.5f * dz.data[j] * eps.data[j] * lat.sigma.data[j] +
                      beta * 0.5f * (std::exp(lat.log_var.data[j]) - 1.0f);
        dmu.data[j] += beta * lat.mu.data[j];
        // Clamp: no gradient outside the active range.
        if (lv_raw.data[j] <= kLogVarMin || lv_raw.data[j] >= kLogVarMax) dlv.data[j] = 0.0f;
    }

    Tensor dh_mu, dh_lv;
    head_mu_.backward(mu_tr, dmu, grads->head_mu, &dh_mu);
    head_logvar_.backward(lv_tr, dlv, grads->head_logvar, &dh_lv);
    for (std::size_t i = 0; i < dh_mu.size(); ++i) dh_mu.data[i] += dh_lv.data[i];

    Tensor dfeat, dzx_enc;
    nn::concat_backward(dh_mu, feat.size(), dfeat, dzx_enc);
    encoder_.backward(enc_tr, dfeat, grads->encoder, nullptr);

    for (std::size_t i = 0; i < dzx_dec.size(); ++i) dzx_dec.data[i] += dzx_enc.data[i];
    embed_.backward(embed_tr, dzx_dec, grads->embed, nullptr);

    return parts;
}

CvaeGrads CvaeModel::make_grads() const {
    CvaeGrads g;
    g.embed = embed_.make_grads();
    g.encoder = encoder_.make_grads();
    g.head_mu = head_mu_.make_grads();
    g.head_logvar = head_logvar_.make_grads();
    g.decoder = decoder_.make_grads();
    return g;
}

std::vector<nn::ParamBinding> CvaeModel::bind(CvaeGrads& grads) {
    std::vector<nn::ParamBinding> refs;
    for (auto& r : embed_.bind(grads.embed)) refs.push_back(r);
    for (auto& r : encoder_.bind(grads.encoder)) refs.push_back(r);
    for (auto& r : head_mu_.bind(grads.head_mu)) refs.push_back(r);
    for (auto& r : head_logvar_.bind(grads.head_logvar)) refs.push_back(r);
    for (auto& r : decoder_.bind(grads.decoder)) refs.push_back(r);
    return refs;
}

std::vector<io::NamedTensor> CvaeModel::to_named_tensors() const {
    std::vector<float> arch = {kArchKindCvae,
                               static_cast<float>(cfg_.channels),
                               static_cast<float>(cfg_.coarse_height),
                               static_cast<float>(cfg_.coarse_width),
                               static_cast<float>(cfg_.latent_dim),
                               static_cast<float>(cfg_.embedding_dim),
                               static_cast<float>(cfg_.embed_channels.size())};
    for (int c : cfg_.embed_channels) arch.push_back(static_cast<float>(c));
    arch.push_back(static_cast<float>(cfg_.encoder_channels.size()));
    for (int c : cfg_.encoder_channels) arch.push_back(static_cast<float>(c));
    arch.push_back(static_cast<float>(cfg_.decoder_base_channels));
    arch.push_back(static_cast<float>(cfg_.decoder_channels.size()));
    for (int c : cfg_.decoder_channels) arch.push_back(static_cast<float>(c));

    std::vector<io::NamedTensor> out;
    out.push_back({"meta/arch", Tensor({static_cast<int>(arch.size())}, arch)});
    for (const nn::Network* net : {&embed_, &encoder_, &head_mu_, &head_logvar_, &decoder_})
        for (auto& [name, value] : net->named_params()) out.push_back({name, *value});
    return out;
}

CvaeModel CvaeModel::from_named_tensors(const std::vector<io::NamedTensor>& tensors,
                                        const std::string& source) {
    const Tensor& arch = io::require_tensor(tensors, "meta/arch", source);
    std::size_t i = 0;
    auto next = [&]() -> int {
        if (i >= arch.size()) throw DataError(source + ": truncated meta/arch tensor");
        return static_cast<int>(arch.data[i++]);
    };
    if (next() != static_cast<int>(kArchKindCvae))
        throw DataError(source + ": checkpoint is not a cvae model");
    CvaeConfig cfg;
    cfg.channels = next();
    cfg.coarse_height = next();
    cfg.coarse_width = next();
    cfg.latent_dim = next();
    cfg.embedding_dim = next();
    cfg.embed_channels.assign(static_cast<std::size_t>(next()), 0);
    for (int& c : cfg.embed_channels) c = next();
    cfg.encoder_channels.assign(static_cast<std::size_t>(next()), 0);
    for (int& c : cfg.encoder_channels) c = next();
    cfg.decoder_base_channels = next();
    cfg.decoder_channels.assign(static_cast<std::size_t>(next()), 0);
    for (int& c : cfg.decoder_channels) c = next();

    CvaeModel model(cfg);
    CvaeGrads scratch = model.make_grads();
    for (auto& r : model.bind(scratch)) {
        const Tensor& t = io::require_tensor(tensors, r.name, source);
        require_shape(t, r.value->shape, source + " tensor " + r.name);
        *r.value = t;
    }
    return model;
}

double kl_beta_for_epoch(int epoch, const TrainConfig& cfg) {
    const int warmup = std::max(1, static_cast<int>(cfg.kl_warmup_fraction *
                                                    static_cast<double>(cfg.epochs)));
    const double ramp = std::min(1.0, static_cast<double>(epoch + 1) / warmup);
    return cfg.beta_kl_max * ramp;
}

std::vector<EpochStats> train_cvae(CvaeModel& model, const synth::DownscalingDataset& data,
                                   const TrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw ConfigError("train: epochs and batch_size must be >= 1");
    const CvaeConfig& mc = model.config();
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

    // Transformed targets for the whole training slice, computed once.
    std::vector<float> y_log1p(static_cast<std::size_t>(n_train) * ys);
    for (std::size_t i = 0; i < y_log1p.size(); ++i)
        y_log1p[i] = std::log1p(std::fmax(data.Y.data[i], 0.0f));

    CvaeGrads master = model.make_grads();
    std::vector<CvaeGrads> chunk_grads;
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

    std::vector<EpochStats> history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));
    std::int64_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RandomStream shuffle_rs(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)});
        for (int i = n_train - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[shuffle_rs.below(static_cast<std::uint32_t>(i + 1))]);

        const double beta = kl_beta_for_epoch(epoch, cfg);
        EpochStats acc;
        double weight = 0.0;

        for (int start = 0; start < n_train; start += cfg.batch_size, ++global_step) {
            const int bn = std::min(cfg.batch_size, n_train - start);
            master.clear();
            std::vector<ElboParts> chunk_sums(kGradChunks);
            for (auto& g : chunk_grads) g.clear();

            parallel_chunks(static_cast<std::size_t>(bn), kGradChunks,
                            [&](int chunk, std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) {
                    const int t = order[static_cast<std::size_t>(start) + i];
                    Tensor x({mc.channels, mc.coarse_height, mc.coarse_width});
                    std::copy_n(data.X.ptr() + static_cast<std::size_t>(t) * xs, xs,
                                x.data.begin());
                    Tensor ylog({hf, wf});
                    std::copy_n(y_log1p.data() + static_cast<std::size_t>(t) * ys, ys,
                                ylog.data.begin());

                    RandomStream eps_rs(cfg.seed, {kTagEps, static_cast<std::uint64_t>(global_step),
                                                   static_cast<std::uint64_t>(i)});
                    Tensor eps({mc.latent_dim});
                    for (float& v : eps.data) v = eps_rs.normal_f();

                    const ElboParts p =
                        model.elbo_with_grads(x, ylog, eps, beta, &chunk_grads[chunk]);
                    chunk_sums[static_cast<std::size_t>(chunk)].total += p.total;
                    chunk_sums[static_cast<std::size_t>(chunk)].recon += p.recon;
                    chunk_sums[static_cast<std::size_t>(chunk)].kl += p.kl;
                }
            });

            ElboParts batch_sum;
            for (int c = 0; c < kGradChunks; ++c) {
                master.add(chunk_grads[static_cast<std::size_t>(c)]);
                batch_sum.total += chunk_sums[static_cast<std::size_t>(c)].total;
                batch_sum.recon += chunk_sums[static_cast<std::size_t>(c)].recon;
                batch_sum.kl += chunk_sums[static_cast<std::size_t>(c)].kl;
            }
            if (!std::isfinite(batch_sum.total))
                throw NumericError("cvae training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(start / cfg.batch_size));
            master.scale(1.0f / static_cast<float>(bn));
            adam.update(params, grads, adam_cfg);

            acc.total += batch_sum.total;
            acc.recon += batch_sum.recon;
            acc.kl += batch_sum.kl;
            weight += bn;
        }
        history.push_back({acc.total / weight, acc.recon / weight, acc.kl / weight});
    }
    return history;
}

std::vector<Tensor> sample_downscaled(const CvaeModel& model, const Tensor& x, int n,
                                      RandomStream& stream) {
    if (n < 1) throw NumericError("sample_downscaled: n must be >= 1");
    const Tensor z_x = model.embed_predictors(x);
    std::vector<Tensor> fields;
    fields.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        Tensor z({model.config().latent_dim});
        for (float& v : z.data) v = stream.normal_f();
        fields.push_back(CvaeModel::to_physical(model.decode(z, z_x)));
    }
    return fields;
}

} // namespace downscaler::cvae
