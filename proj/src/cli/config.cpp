#include "downscaler/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "downscaler/error.hpp"

namespace downscaler::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long parse_integer(const std::string& key, const std::string& value) {
    long long v = 0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
    return v;
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
    }
}

struct Knob {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<Knob> knob_table() {
    auto int_knob = [](const char* name, int RunConfig::*field, long long lo, long long hi) {
        return Knob{name, [=](RunConfig& c, const std::string& v) {
                        const long long parsed = parse_integer(name, v);
                        if (parsed < lo || parsed > hi)
                            throw ConfigError("config key '" + std::string(name) + "': value " +
                                              v + " outside [" + std::to_string(lo) + ", " +
                                              std::to_string(hi) + "]");
                        c.*field = static_cast<int>(parsed);
                    }};
    };
    auto real_knob = [](const char* name, double RunConfig::*field, double lo, double hi,
                        bool exclusive_lo = false) {
        return Knob{name, [=](RunConfig& c, const std::string& v) {
                        const double parsed = parse_real(name, v);
                        const bool below = exclusive_lo ? !(parsed > lo) : parsed < lo;
                        if (below || parsed > hi)
                            throw ConfigError("config key '" + std::string(name) + "': value " +
                                              v + " outside " + (exclusive_lo ? "(" : "[") +
                                              std::to_string(lo) + ", " + std::to_string(hi) +
                                              "]");
                        c.*field = parsed;
                    }};
    };

    std::vector<Knob> knobs;
    knobs.push_back({"seed", [](RunConfig& c, const std::string& v) {
                         const long long parsed = parse_integer("seed", v);
                         if (parsed < 0)
                             throw ConfigError("config key 'seed': value must be >= 0");
                         c.seed = static_cast<std::uint64_t>(parsed);
                     }});
    knobs.push_back(int_knob("time_steps", &RunConfig::time_steps, 10, 1000000));
    knobs.push_back(int_knob("channels", &RunConfig::channels, 1, 1024));
    knobs.push_back(int_knob("coarse_height", &RunConfig::coarse_height, 2, 512));
    knobs.push_back(int_knob("coarse_width", &RunConfig::coarse_width, 2, 512));
    knobs.push_back(real_knob("state_correlation_length", &RunConfig::state_correlation_length,
                              0.0, 64.0));
    knobs.push_back(real_knob("noise_correlation_length", &RunConfig::noise_correlation_length,
                              0.0, 64.0));
    knobs.push_back(real_knob("noise_scale", &RunConfig::noise_scale, 0.0, 100.0));
    knobs.push_back(real_knob("precip_scale", &RunConfig::precip_scale, 0.0, 10.0, true));
    knobs.push_back(real_knob("latent_threshold", &RunConfig::latent_threshold, -3.0, 3.0));
    knobs.push_back(int_knob("latent_dim", &RunConfig::latent_dim, 1, 4096));
    knobs.push_back(int_knob("embedding_dim", &RunConfig::embedding_dim, 1, 65536));
    knobs.push_back(int_knob("epochs", &RunConfig::epochs, 1, 100000));
    knobs.push_back(int_knob("batch_size", &RunConfig::batch_size, 1, 65536));
    knobs.push_back(real_knob("learning_rate", &RunConfig::learning_rate, 0.0, 1.0, true));
    knobs.push_back(real_knob("beta_kl_max", &RunConfig::beta_kl_max, 0.0, 1000.0));
    knobs.push_back(real_knob("kl_warmup_fraction", &RunConfig::kl_warmup_fraction, 0.0, 1.0));
    knobs.push_back(real_knob("wet_threshold", &RunConfig::wet_threshold, 0.0, 100.0, true));
    knobs.push_back(int_knob("ensemble_size", &RunConfig::ensemble_size, 1, 10000));
    knobs.push_back(int_knob("variogram_max_lag", &RunConfig::variogram_max_lag, 1, 64));
    return knobs;
}

} // namespace

RunConfig RunConfig::from_string(const std::string& text, const std::string& source) {
    static const std::vector<Knob> knobs = knob_table();

    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key or value");

        const Knob* knob = nullptr;
        for (const auto& k : knobs)
            if (k.name == key) {
                knob = &k;
                break;
            }
        if (!knob)
            throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown config key '" +
                              key + "'");
        knob->set(cfg, value);
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_string(text, path);
}

synth::GeneratorConfig RunConfig::generator() const {
    synth::GeneratorConfig g;
    g.time_steps = time_steps;
    g.channels = channels;
    g.coarse_height = coarse_height;
    g.coarse_width = coarse_width;
    g.state_correlation_length = state_correlation_length;
    g.noise_correlation_length = noise_correlation_length;
    g.noise_scale = noise_scale;
    g.precip_scale = precip_scale;
    g.latent_threshold = latent_threshold;
    g.seed = seed;
    return g;
}

cvae::CvaeConfig RunConfig::cvae_model() const {
    cvae::CvaeConfig m;
    m.channels = channels;
    m.coarse_height = coarse_height;
    m.coarse_width = coarse_width;
    m.latent_dim = latent_dim;
    m.embedding_dim = embedding_dim;
    return m;
}

cvae::TrainConfig RunConfig::cvae_train() const {
    cvae::TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.learning_rate = static_cast<float>(learning_rate);
    t.beta_kl_max = beta_kl_max;
    t.kl_warmup_fraction = kl_warmup_fraction;
    t.seed = seed;
    return t;
}

bg::BaselineConfig RunConfig::baseline_model() const {
    bg::BaselineConfig m;
    m.channels = channels;
    m.coarse_height = coarse_height;
    m.coarse_width = coarse_width;
    return m;
}

bg::BaselineTrainConfig RunConfig::baseline_train() const {
    bg::BaselineTrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.learning_rate = static_cast<float>(learning_rate);
    t.wet_threshold = wet_threshold;
    t.seed = seed;
    return t;
}

eval::CompareConfig RunConfig::compare() const {
    eval::CompareConfig c;
    c.wet_threshold = wet_threshold;
    c.max_lag = variogram_max_lag;
    return c;
}

} // namespace downscaler::cli
