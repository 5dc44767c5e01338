#include "rydgate/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rydgate/errors.hpp"
#include "rydgate/units.hpp"

namespace rydgate {

using nlohmann::json;
using units::kTwoPi;

namespace {

// Best-effort line number of `key` inside `section` (or at top level).
int locate(const std::string& text, const std::string& section, const std::string& key) {
    std::size_t from = 0;
    if (!section.empty()) {
        const auto s = text.find("\"" + section + "\"");
        if (s != std::string::npos) {
            from = s;
        }
    }
    auto pos = key.empty() ? from : text.find("\"" + key + "\"", from);
    if (pos == std::string::npos) {
        pos = from;
    }
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
}

class Reader {
  public:
    Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& section, const std::string& key,
                           const std::string& message) const {
        const std::string path = section.empty() ? key : section + "." + key;
        throw ConfigError(source_ + ":" + std::to_string(locate(text_, section, key)),
                          path + ": " + message);
    }

    void check_keys(const json& obj, const std::string& section,
                    const std::set<std::string>& allowed) const {
        if (!obj.is_object()) {
            fail("", section, "must be an object");
        }
        for (const auto& [k, v] : obj.items()) {
            if (!allowed.count(k)) {
                fail(section, k, "unknown key");
            }
        }
    }

    double number(const json& obj, const std::string& section, const std::string& key,
                  double fallback) const {
        if (!obj.contains(key)) {
            return fallback;
        }
        const json& v = obj.at(key);
        if (!v.is_number()) {
            fail(section, key, "expected a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            fail(section, key, "must be finite");
        }
        return d;
    }

    double positive(const json& obj, const std::string& section, const std::string& key,
                    double fallback) const {
        const double d = number(obj, section, key, fallback);
        if (!(d > 0.0)) {
            fail(section, key, "must be positive, got " + format(d));
        }
        return d;
    }

    double non_negative(const json& obj, const std::string& section, const std::string& key,
                        double fallback) const {
        const double d = number(obj, section, key, fallback);
        if (!(d >= 0.0)) {
            fail(section, key, "must be non-negative, got " + format(d));
        }
        return d;
    }

    long integer(const json& obj, const std::string& section, const std::string& key,
                 long fallback, long min) const {
        if (!obj.contains(key)) {
            return fallback;
        }
        const json& v = obj.at(key);
        if (!v.is_number_integer()) {
            fail(section, key, "expected an integer");
        }
        const long i = v.get<long>();
        if (i < min) {
            fail(section, key, "must be at least " + std::to_string(min));
        }
        return i;
    }

    bool boolean(const json& obj, const std::string& section, const std::string& key,
                 bool fallback) const {
        if (!obj.contains(key)) {
            return fallback;
        }
        if (!obj.at(key).is_boolean()) {
            fail(section, key, "expected true or false");
        }
        return obj.at(key).get<bool>();
    }

    std::vector<double> number_list(const json& obj, const std::string& section,
                                    const std::string& key) const {
        const json& v = obj.at(key);
        if (!v.is_array()) {
            fail(section, key, "expected an array of numbers");
        }
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) {
                fail(section, key, "expected an array of numbers");
            }
            out.push_back(e.get<double>());
        }
        return out;
    }

    static std::string format(double d) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", d);
        return buf;
    }

  private:
    const std::string& text_;
    std::string source_;
};

}  // namespace

AtomLayout ExperimentConfig::layout() const {
    if (!positions_um.empty()) {
        return layout_from_positions(positions_um);
    }
    return place_atoms(n_targets, radius_um);
}

ProblemSpec ExperimentConfig::problem() const {
    ProblemSpec p;
    p.layout = layout();
    p.constants = constants;
    p.noise = noise_enabled ? noise : NoiseModel::ideal();
    p.target.n_targets = n_targets;
    p.target.use_compensation = compensation_phases;
    p.duration_ns = duration_ns;
    p.n_segments = n_segments;
    p.ramp_ns = ramp_ns;
    return p;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        // byte offset -> line
        const auto offset = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + offset, '\n'));
        throw ConfigError(source + ":" + std::to_string(line), "malformed JSON");
    }
    const Reader rd(text, source);
    rd.check_keys(root, "", {"gate", "geometry", "pulse", "noise", "optimizer", "sweep", "seed",
                             "output_dir"});
    ExperimentConfig c;
    const json empty = json::object();

    const json& gate = root.contains("gate") ? root.at("gate") : empty;
    rd.check_keys(gate, "gate", {"n_targets", "compensation_phases"});
    c.n_targets = static_cast<int>(rd.integer(gate, "gate", "n_targets", c.n_targets, 1));
    if (c.n_targets > 5) {
        rd.fail("gate", "n_targets", "at most 5 targets are supported");
    }
    c.compensation_phases = rd.boolean(gate, "gate", "compensation_phases", c.compensation_phases);

    const json& geo = root.contains("geometry") ? root.at("geometry") : empty;
    rd.check_keys(geo, "geometry", {"radius_um", "positions_um", "c6_2pi_mhz_um6"});
    c.radius_um = rd.positive(geo, "geometry", "radius_um", c.radius_um);
    c.constants.c6 = kTwoPi * rd.positive(geo, "geometry", "c6_2pi_mhz_um6", c.constants.c6 / kTwoPi);
    if (geo.contains("positions_um")) {
        const json& pos = geo.at("positions_um");
        if (!pos.is_array()) {
            rd.fail("geometry", "positions_um", "expected an array of [x, y, z] triples");
        }
        for (const auto& p : pos) {
            if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
                !p[2].is_number()) {
                rd.fail("geometry", "positions_um", "expected an array of [x, y, z] triples");
            }
            c.positions_um.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
        }
        if (static_cast<int>(c.positions_um.size()) != c.n_targets + 1) {
            rd.fail("geometry", "positions_um",
                    "expected " + std::to_string(c.n_targets + 1) + " positions (control first)");
        }
    }

    const json& pulse = root.contains("pulse") ? root.at("pulse") : empty;
    rd.check_keys(pulse, "pulse", {"duration_ns", "n_segments", "ramp_ns", "omega_max_2pi_mhz"});
    c.duration_ns = rd.positive(pulse, "pulse", "duration_ns", c.duration_ns);
    c.n_segments = static_cast<int>(rd.integer(pulse, "pulse", "n_segments", c.n_segments, 3));
    c.ramp_ns = rd.non_negative(pulse, "pulse", "ramp_ns", c.ramp_ns);
    c.constants.omega_max =
        kTwoPi * rd.positive(pulse, "pulse", "omega_max_2pi_mhz", c.constants.omega_max / kTwoPi);
    if (!(c.duration_ns > 2.0 * c.ramp_ns)) {
        rd.fail("pulse", "ramp_ns", "both ramps must fit inside duration_ns");
    }

    const json& noise = root.contains("noise") ? root.at("noise") : empty;
    rd.check_keys(noise, "noise", {"enabled", "rydberg_lifetime_us", "decay_rate_per_us",
                                   "branch_r_to_0", "branch_r_to_1", "branch_leak", "sigma_x_um",
                                   "sigma_y_um", "sigma_z_um"});
    c.noise_enabled = rd.boolean(noise, "noise", "enabled", c.noise_enabled);
    if (noise.contains("rydberg_lifetime_us") && noise.contains("decay_rate_per_us")) {
        rd.fail("noise", "decay_rate_per_us", "give either rydberg_lifetime_us or decay_rate_per_us");
    }
    if (noise.contains("rydberg_lifetime_us")) {
        c.noise.decay_rate_per_us = 1.0 / rd.positive(noise, "noise", "rydberg_lifetime_us", 88.0);
    }
    c.noise.decay_rate_per_us =
        rd.non_negative(noise, "noise", "decay_rate_per_us", c.noise.decay_rate_per_us);
    c.noise.branch_to_0 = rd.non_negative(noise, "noise", "branch_r_to_0", c.noise.branch_to_0);
    c.noise.branch_to_1 = rd.non_negative(noise, "noise", "branch_r_to_1", c.noise.branch_to_1);
    c.noise.branch_leak = rd.non_negative(noise, "noise", "branch_leak", c.noise.branch_leak);
    if (std::abs(c.noise.branch_to_0 + c.noise.branch_to_1 + c.noise.branch_leak - 1.0) > 1e-9) {
        rd.fail("noise", "branch_leak", "branch fractions must sum to 1");
    }
    c.noise.sigma_x_um = rd.non_negative(noise, "noise", "sigma_x_um", c.noise.sigma_x_um);
    c.noise.sigma_y_um = rd.non_negative(noise, "noise", "sigma_y_um", c.noise.sigma_y_um);
    c.noise.sigma_z_um = rd.non_negative(noise, "noise", "sigma_z_um", c.noise.sigma_z_um);

    const json& opt = root.contains("optimizer") ? root.at("optimizer") : empty;
    rd.check_keys(opt, "optimizer",
                  {"learning_rate", "final_learning_rate", "beta1", "beta2", "epsilon",
                   "iterations", "batch_size", "lambda_s_initial", "lambda_b", "exponent_b",
                   "tau_rad", "restarts", "patience", "eval_samples", "validation_samples",
                   "eval_every", "max_phase_jump_rad", "initialization", "smooth_modes", "ideal_pretrain",
                   "finetune_iterations", "finetune_learning_rate", "robust_iterations",
                   "robust_batch_size", "robust_learning_rate", "refine_tau_rad", "screen_samples",
                   "refine_candidates"});
    OptimizerConfig& o = c.optimizer;
    o.learning_rate = rd.positive(opt, "optimizer", "learning_rate", o.learning_rate);
    o.final_learning_rate = rd.positive(opt, "optimizer", "final_learning_rate",
                                        std::min(o.final_learning_rate, o.learning_rate));
    o.beta1 = rd.non_negative(opt, "optimizer", "beta1", o.beta1);
    o.beta2 = rd.non_negative(opt, "optimizer", "beta2", o.beta2);
    o.epsilon = rd.positive(opt, "optimizer", "epsilon", o.epsilon);
    o.iterations = static_cast<int>(rd.integer(opt, "optimizer", "iterations", o.iterations, 0));
    o.batch_size = static_cast<int>(rd.integer(opt, "optimizer", "batch_size", o.batch_size, 1));
    o.lambda_s_initial = rd.non_negative(opt, "optimizer", "lambda_s_initial", o.lambda_s_initial);
    o.lambda_b = rd.non_negative(opt, "optimizer", "lambda_b", o.lambda_b);
    o.exponent_b = rd.non_negative(opt, "optimizer", "exponent_b", o.exponent_b);
    o.tau = rd.positive(opt, "optimizer", "tau_rad", o.tau);
    o.restarts = static_cast<int>(rd.integer(opt, "optimizer", "restarts", o.restarts, 1));
    o.patience = static_cast<int>(rd.integer(opt, "optimizer", "patience", o.patience, 0));
    o.eval_samples = static_cast<int>(rd.integer(opt, "optimizer", "eval_samples", o.eval_samples, 1));
    o.validation_samples = static_cast<int>(
        rd.integer(opt, "optimizer", "validation_samples", o.validation_samples, 1));
    o.eval_every = static_cast<int>(rd.integer(opt, "optimizer", "eval_every", o.eval_every, 1));
    o.max_phase_jump = rd.positive(opt, "optimizer", "max_phase_jump_rad", o.max_phase_jump);
    if (opt.contains("initialization")) {
        const json& v = opt.at("initialization");
        if (v == "uniform") {
            o.init = OptimizerConfig::Init::kUniform;
        } else if (v == "smooth") {
            o.init = OptimizerConfig::Init::kSmooth;
        } else {
            rd.fail("optimizer", "initialization", "expected \"uniform\" or \"smooth\"");
        }
    }
    o.smooth_modes = static_cast<int>(rd.integer(opt, "optimizer", "smooth_modes", o.smooth_modes, 1));
    o.ideal_pretrain = rd.boolean(opt, "optimizer", "ideal_pretrain", o.ideal_pretrain);
    o.finetune_iterations = static_cast<int>(
        rd.integer(opt, "optimizer", "finetune_iterations", o.finetune_iterations, 0));
    o.finetune_learning_rate =
        rd.positive(opt, "optimizer", "finetune_learning_rate", o.finetune_learning_rate);
    o.robust_iterations = static_cast<int>(
        rd.integer(opt, "optimizer", "robust_iterations", o.robust_iterations, 0));
    o.robust_batch_size = static_cast<int>(
        rd.integer(opt, "optimizer", "robust_batch_size", o.robust_batch_size, 1));
    o.robust_learning_rate =
        rd.positive(opt, "optimizer", "robust_learning_rate", o.robust_learning_rate);
    o.refine_tau = rd.non_negative(opt, "optimizer", "refine_tau_rad", o.refine_tau);
    o.screen_samples = static_cast<int>(
        rd.integer(opt, "optimizer", "screen_samples", o.screen_samples, 1));
    o.refine_candidates = static_cast<int>(
        rd.integer(opt, "optimizer", "refine_candidates", o.refine_candidates, 1));
    try {
        o.validate();
    } catch (const InvalidArgument& e) {
        const std::string msg = e.what();
        rd.fail("optimizer", msg.substr(0, msg.find(' ')), msg);
    }

    if (root.contains("sweep")) {
        const json& sw = root.at("sweep");
        rd.check_keys(sw, "sweep", {"durations_ns", "radii_um", "noise"});
        SweepSpec spec;
        if (!sw.contains("durations_ns")) {
            rd.fail("sweep", "durations_ns", "missing");
        }
        if (!sw.contains("radii_um")) {
            rd.fail("sweep", "radii_um", "missing");
        }
        spec.durations_ns = rd.number_list(sw, "sweep", "durations_ns");
        spec.radii_um = rd.number_list(sw, "sweep", "radii_um");
        spec.noise_enabled = rd.boolean(sw, "sweep", "noise", false);
        if (spec.durations_ns.empty()) {
            rd.fail("sweep", "durations_ns", "grid is empty");
        }
        if (spec.radii_um.empty()) {
            rd.fail("sweep", "radii_um", "grid is empty");
        }
        for (double t : spec.durations_ns) {
            if (!(t > 2.0 * c.ramp_ns)) {
                rd.fail("sweep", "durations_ns", "every duration must exceed twice ramp_ns");
            }
        }
        for (double r : spec.radii_um) {
            if (!(r > 0.0)) {
                rd.fail("sweep", "radii_um", "radii must be positive");
            }
        }
        c.sweep = spec;
    }

    if (root.contains("seed")) {
        if (!root.at("seed").is_number_unsigned()) {
            rd.fail("", "seed", "expected a non-negative integer");
        }
        c.seed = root.at("seed").get<std::uint64_t>();
    }
    c.optimizer.seed = c.seed;
    if (root.contains("output_dir")) {
        if (!root.at("output_dir").is_string()) {
            rd.fail("", "output_dir", "expected a string");
        }
        c.output_dir = root.at("output_dir").get<std::string>();
    }

    try {
        c.problem().validate();
    } catch (const std::exception& e) {
        throw ConfigError(source, e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string(), "cannot open config file");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["gate"] = {{"n_targets", c.n_targets}, {"compensation_phases", c.compensation_phases}};
    j["geometry"] = {{"radius_um", c.radius_um}, {"c6_2pi_mhz_um6", c.constants.c6 / kTwoPi}};
    if (!c.positions_um.empty()) {
        json pos = json::array();
        for (const auto& p : c.positions_um) {
            pos.push_back({p[0], p[1], p[2]});
        }
        j["geometry"]["positions_um"] = pos;
    }
    j["pulse"] = {{"duration_ns", c.duration_ns},
                  {"n_segments", c.n_segments},
                  {"ramp_ns", c.ramp_ns},
                  {"omega_max_2pi_mhz", c.constants.omega_max / kTwoPi}};
    j["noise"] = {{"enabled", c.noise_enabled},
                  {"decay_rate_per_us", c.noise.decay_rate_per_us},
                  {"branch_r_to_0", c.noise.branch_to_0},
                  {"branch_r_to_1", c.noise.branch_to_1},
                  {"branch_leak", c.noise.branch_leak},
                  {"sigma_x_um", c.noise.sigma_x_um},
                  {"sigma_y_um", c.noise.sigma_y_um},
                  {"sigma_z_um", c.noise.sigma_z_um}};
    const OptimizerConfig& o = c.optimizer;
    j["optimizer"] = {{"learning_rate", o.learning_rate},
                      {"final_learning_rate", o.final_learning_rate},
                      {"beta1", o.beta1},
                      {"beta2", o.beta2},
                      {"epsilon", o.epsilon},
                      {"iterations", o.iterations},
                      {"batch_size", o.batch_size},
                      {"lambda_s_initial", o.lambda_s_initial},
                      {"lambda_b", o.lambda_b},
                      {"exponent_b", o.exponent_b},
                      {"tau_rad", o.tau},
                      {"restarts", o.restarts},
                      {"patience", o.patience},
                      {"eval_samples", o.eval_samples},
                      {"validation_samples", o.validation_samples},
                      {"eval_every", o.eval_every},
                      {"max_phase_jump_rad", o.max_phase_jump},
                      {"initialization", init_name(o.init)},
                      {"smooth_modes", o.smooth_modes},
                      {"ideal_pretrain", o.ideal_pretrain},
                      {"finetune_iterations", o.finetune_iterations},
                      {"finetune_learning_rate", o.finetune_learning_rate},
                      {"robust_iterations", o.robust_iterations},
                      {"robust_batch_size", o.robust_batch_size},
                      {"robust_learning_rate", o.robust_learning_rate},
                      {"refine_tau_rad", o.refine_tau},
                      {"screen_samples", o.screen_samples},
                      {"refine_candidates", o.refine_candidates}};
    if (c.sweep) {
        j["sweep"] = {{"durations_ns", c.sweep->durations_ns},
                      {"radii_um", c.sweep->radii_um},
                      {"noise", c.sweep->noise_enabled}};
    }
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
    const std::string text = config_to_json(config);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rydgate
