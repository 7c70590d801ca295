#include "downscaler/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "downscaler/bg/model.hpp"
#include "downscaler/cli/config.hpp"
#include "downscaler/cvae/model.hpp"
#include "downscaler/error.hpp"
#include "downscaler/eval/metrics.hpp"
#include "downscaler/io/formats.hpp"
#include "downscaler/synth/dataset.hpp"

namespace downscaler::cli {

namespace {

constexpr std::uint64_t kTagSample = 0x53414d50;

template <typename F>
int guarded(F&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return RunConfig::from_file(path);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << text;
    if (!out) throw DataError(path + ": write failed");
}

// Model kind recorded in the checkpoint's meta/arch tensor.
int checkpoint_kind(const std::vector<io::NamedTensor>& tensors, const std::string& path) {
    const Tensor& arch = io::require_tensor(tensors, "meta/arch", path);
    if (arch.size() < 1) throw DataError(path + ": empty meta/arch tensor");
    return static_cast<int>(arch.data[0]);
}

} // namespace

int cmd_gen_data(const std::string& config_path, const std::string& out_path) {
    return guarded([&] {
        const RunConfig cfg = RunConfig::from_file(config_path);
        const synth::DownscalingDataset ds = synth::generate_dataset(cfg.generator());
        synth::save_dataset(out_path, ds);
        std::printf("dataset: X [%d,%d,%d,%d] Y [%d,%d,%d] split %d seed %llu -> %s\n",
                    ds.time_steps(), ds.channels(), ds.coarse_height(), ds.coarse_width(),
                    ds.time_steps(), ds.fine_height(), ds.fine_width(), ds.split_index,
                    static_cast<unsigned long long>(cfg.seed), out_path.c_str());
        return kExitOk;
    });
}

int cmd_train(const std::string& model, const std::string& data_path,
              const std::string& config_path, const std::string& ckpt_out,
              const std::string& loss_csv) {
    return guarded([&] {
        if (model != "cvae" && model != "baseline")
            throw ConfigError("train: --model must be 'cvae' or 'baseline', got '" + model + "'");
        const RunConfig cfg = RunConfig::from_file(config_path);
        const synth::DownscalingDataset ds = synth::load_dataset(data_path);
        const std::string csv_path = loss_csv.empty() ? ckpt_out + ".loss.csv" : loss_csv;

        if (model == "cvae") {
            cvae::CvaeModel net(cfg.cvae_model());
            net.init_params(cfg.seed);
            const auto history = cvae::train_cvae(net, ds, cfg.cvae_train());
            io::write_checkpoint(ckpt_out, net.to_named_tensors());
            std::string csv = "epoch,total,recon,kl\n";
            for (std::size_t e = 0; e < history.size(); ++e)
                csv += std::to_string(e + 1) + "," + io::format_double(history[e].total) + "," +
                       io::format_double(history[e].recon) + "," +
                       io::format_double(history[e].kl) + "\n";
            write_text_file(csv_path, csv);
            std::printf("trained cvae: %zu epochs, final total %s (recon %s, kl %s) -> %s\n",
                        history.size(), io::format_double(history.back().total).c_str(),
                        io::format_double(history.back().recon).c_str(),
                        io::format_double(history.back().kl).c_str(), ckpt_out.c_str());
        } else {
            bg::BaselineModel net(cfg.baseline_model());
            net.init_params(cfg.seed);
            const auto history = bg::train_baseline(net, ds, cfg.baseline_train());
            io::write_checkpoint(ckpt_out, net.to_named_tensors());
            std::string csv = "epoch,nll\n";
            for (std::size_t e = 0; e < history.size(); ++e)
                csv += std::to_string(e + 1) + "," + io::format_double(history[e]) + "\n";
            write_text_file(csv_path, csv);
            std::printf("trained baseline: %zu epochs, final mean nll %s -> %s\n", history.size(),
                        io::format_double(history.back()).c_str(), ckpt_out.c_str());
        }
        return kExitOk;
    });
}

int cmd_sample(const std::string& ckpt_path, const std::string& data_path, int num_samples,
               std::uint64_t seed, const std::string& out_path, const std::string& pgm_dir,
               int pgm_day) {
    return guarded([&] {
        if (num_samples < 1) throw ConfigError("sample: --num-samples must be >= 1");
        const auto tensors = io::read_checkpoint(ckpt_path);
        const synth::DownscalingDataset ds = synth::load_dataset(data_path);
        const int kind = checkpoint_kind(tensors, ckpt_path);

        const int t_total = ds.time_steps();
        const int split = ds.split_index;
        const int t_test = t_total - split;
        const int hf = ds.fine_height(), wf = ds.fine_width();
        const std::size_t xs = static_cast<std::size_t>(ds.channels()) * ds.coarse_height() *
                               ds.coarse_width();

        auto check_grids = [&](int mc, int mh, int mw) {
            if (mc != ds.channels() || mh != ds.coarse_height() || mw != ds.coarse_width())
                throw DataError("sample: checkpoint expects predictors " +
                                shape_to_string({mc, mh, mw}) + " but dataset provides " +
                                shape_to_string({ds.channels(), ds.coarse_height(),
                                                 ds.coarse_width()}));
        };

        Tensor samples({t_test, num_samples, hf, wf});
        const std::size_t plane = static_cast<std::size_t>(hf) * wf;
        std::string model_name;

        if (kind == 0) {
            const cvae::CvaeModel model = cvae::CvaeModel::from_named_tensors(tensors, ckpt_path);
            check_grids(model.config().channels, model.config().coarse_height,
                        model.config().coarse_width);
            model_name = "cvae";
            for (int k = 0; k < t_test; ++k) {
                const int t = split + k;
                Tensor x({ds.channels(), ds.coarse_height(), ds.coarse_width()});
                std::copy_n(ds.X.ptr() + static_cast<std::size_t>(t) * xs, xs, x.data.begin());
                RandomStream stream(seed, {kTagSample, static_cast<std::uint64_t>(t)});
                const auto fields = cvae::sample_downscaled(model, x, num_samples, stream);
                for (int j = 0; j < num_samples; ++j)
                    std::copy_n(fields[static_cast<std::size_t>(j)].ptr(), plane,
                                samples.ptr() +
                                    (static_cast<std::size_t>(k) * num_samples + j) * plane);
            }
        } else if (kind == 1) {
            const bg::BaselineModel model =
                bg::BaselineModel::from_named_tensors(tensors, ckpt_path);
            check_grids(model.config().channels, model.config().coarse_height,
                        model.config().coarse_width);
            model_name = "baseline";
            for (int k = 0; k < t_test; ++k) {
                const int t = split + k;
                Tensor x({ds.channels(), ds.coarse_height(), ds.coarse_width()});
                std::copy_n(ds.X.ptr() + static_cast<std::size_t>(t) * xs, xs, x.data.begin());
                const bg::BernoulliGammaField field = model.forward(x);
                for (int j = 0; j < num_samples; ++j) {
                    RandomStream stream(seed, {kTagSample, static_cast<std::uint64_t>(t),
                                               static_cast<std::uint64_t>(j)});
                    const Tensor draw = bg::sample_bg_field(field, stream);
                    std::copy_n(draw.ptr(), plane,
                                samples.ptr() +
                                    (static_cast<std::size_t>(k) * num_samples + j) * plane);
                }
            }
        } else {
            throw DataError(ckpt_path + ": unknown model kind " + std::to_string(kind));
        }

        if (!pgm_dir.empty() && (pgm_day < 0 || pgm_day >= t_test))
            throw DataError("sample: --pgm-day " + std::to_string(pgm_day) +
                            " outside test slice [0, " + std::to_string(t_test) + ")");

        nlohmann::json meta;
        meta["kind"] = "samples";
        meta["model"] = model_name;
        meta["ensemble_size"] = num_samples;
        meta["seed"] = seed;
        meta["source_time_steps"] = t_total;
        meta["split_index"] = split;

        io::DsetFile f;
        f.tensors.push_back({"samples", samples});
        f.split_index = 0;
        f.metadata_json = meta.dump();
        io::write_dset(out_path, f);

        if (!pgm_dir.empty()) {
            std::filesystem::create_directories(pgm_dir);
            char name[64];
            for (int j = 0; j < num_samples; ++j) {
                Tensor field({hf, wf});
                std::copy_n(samples.ptr() +
                                (static_cast<std::size_t>(pgm_day) * num_samples + j) * plane,
                            plane, field.data.begin());
                std::snprintf(name, sizeof(name), "day%04d_%s_sample%02d.pgm", pgm_day,
                              model_name.c_str(), j);
                io::write_pgm(pgm_dir + "/" + name, field);
            }
            Tensor truth({hf, wf});
            std::copy_n(ds.Y.ptr() + static_cast<std::size_t>(split + pgm_day) * plane, plane,
                        truth.data.begin());
            std::snprintf(name, sizeof(name), "day%04d_truth.pgm", pgm_day);
            io::write_pgm(pgm_dir + "/" + name, truth);
        }

        std::printf("samples: [%d,%d,%d,%d] model=%s seed=%llu -> %s\n", t_test, num_samples, hf,
                    wf, model_name.c_str(), static_cast<unsigned long long>(seed),
                    out_path.c_str());
        return kExitOk;
    });
}

int cmd_evaluate(const std::string& truth_path, const std::string& cvae_samples_path,
                 const std::string& baseline_samples_path, const std::string& report_out,
                 const std::string& config_path) {
    return guarded([&] {
        const RunConfig cfg = load_config_or_default(config_path);
        const synth::DownscalingDataset ds = synth::load_dataset(truth_path);

        auto load_samples = [&](const std::string& path) {
            io::DsetFile f = io::read_dset(path);
            Tensor s = io::require_tensor(f.tensors, "samples", path);
            if (s.rank() != 4)
                throw DataError(path + ": samples tensor must be rank 4, got " +
                                shape_to_string(s.shape));
            return s;
        };
        const Tensor cvae_samples = load_samples(cvae_samples_path);
        const Tensor bg_samples = load_samples(baseline_samples_path);

        const int t_test = ds.time_steps() - ds.split_index;
        const int hf = ds.fine_height(), wf = ds.fine_width();
        for (const auto* s : {&cvae_samples, &bg_samples}) {
            if (s->shape[0] != t_test || s->shape[2] != hf || s->shape[3] != wf)
                throw DataError("evaluate: samples " + shape_to_string(s->shape) +
                                " do not cover the test slice [" + std::to_string(t_test) + "," +
                                std::to_string(hf) + "," + std::to_string(wf) + "]");
        }

        Tensor truth({t_test, hf, wf});
        const std::size_t plane = static_cast<std::size_t>(hf) * wf;
        std::copy_n(ds.Y.ptr() + static_cast<std::size_t>(ds.split_index) * plane,
                    static_cast<std::size_t>(t_test) * plane, truth.data.begin());

        const eval::MetricReport report =
            eval::compare_models(cvae_samples, bg_samples, truth, cfg.compare());
        eval::write_report_csv(report_out, report);

        const double nc_truth = report.value("neighbor_correlation", "truth");
        const double nc_cvae = report.value("neighbor_correlation", "cvae");
        const double nc_bg = report.value("neighbor_correlation", "baseline");
        std::printf("verdict: neighbor correlation truth=%.3f cvae=%.3f baseline=%.3f "
                    "(cvae closer to truth by %.3f)\n",
                    nc_truth, nc_cvae, nc_bg,
                    std::fabs(nc_truth - nc_bg) - std::fabs(nc_truth - nc_cvae));
        return kExitOk;
    });
}

} // namespace downscaler::cli
