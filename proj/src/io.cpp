#include "rydgate/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"
#include "rydgate/errors.hpp"
#include "rydgate/units.hpp"

namespace rydgate {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) {
            s += ';';
        }
        s += fmt(values[i]);
    }
    return s;
}

double parse_double(const std::string& text, const std::string& where, const std::string& field) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(v)) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where, field + ": expected a finite number, got '" + text + "'");
    }
}

long parse_long(const std::string& text, const std::string& where, const std::string& field) {
    try {
        std::size_t used = 0;
        const long v = std::stol(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where, field + ": expected an integer, got '" + text + "'");
    }
}

std::vector<double> split_doubles(const std::string& text, const std::string& where,
                                  const std::string& field) {
    std::vector<double> out;
    if (text.empty()) {
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        out.push_back(parse_double(item, where, field));
    }
    return out;
}

}  // namespace

PulseSchedule PulseRecord::schedule() const {
    return make_schedule(duration_ns, n_segments, omega_max, ramp_ns, phases);
}

GateTarget PulseRecord::target() const {
    GateTarget t;
    t.n_targets = n_targets;
    t.compensation_phases = compensation_phases;
    t.use_compensation = compensation_enabled;
    return t;
}

void PulseRecord::validate() const {
    if (n_targets < 1) {
        throw ConfigError("n_targets", "must be at least 1");
    }
    if (!(radius_um > 0.0)) {
        throw ConfigError("radius_um", "must be positive");
    }
    if (!(duration_ns > 0.0)) {
        throw ConfigError("duration_ns", "must be positive");
    }
    if (n_segments < 3) {
        throw ConfigError("n_segments", "must be at least 3");
    }
    if (!(ramp_ns >= 0.0) || !(duration_ns > 2.0 * ramp_ns)) {
        throw ConfigError("ramp_ns", "ramps must fit inside the duration");
    }
    if (!(omega_max > 0.0)) {
        throw ConfigError("omega_max_2pi_mhz", "must be positive");
    }
    if (static_cast<int>(phases.size()) != n_segments) {
        throw ConfigError("phase_rad", "expected " + std::to_string(n_segments) + " phases, found " +
                                           std::to_string(phases.size()));
    }
    if (!compensation_phases.empty() &&
        static_cast<int>(compensation_phases.size()) != n_targets + 1) {
        throw ConfigError("compensation_phases_rad",
                          "expected " + std::to_string(n_targets + 1) + " values");
    }
}

void write_pulse_csv(std::ostream& out, const PulseRecord& p) {
    p.validate();
    out << "# format=rydgate-pulse-1\n";
    out << "# n_targets=" << p.n_targets << '\n';
    out << "# radius_um=" << fmt(p.radius_um) << '\n';
    out << "# duration_ns=" << fmt(p.duration_ns) << '\n';
    out << "# n_segments=" << p.n_segments << '\n';
    out << "# ramp_ns=" << fmt(p.ramp_ns) << '\n';
    out << "# omega_max_2pi_mhz=" << fmt(units::to_two_pi_mhz(p.omega_max)) << '\n';
    out << "# compensation_enabled=" << (p.compensation_enabled ? "true" : "false") << '\n';
    out << "# compensation_phases_rad=" << join(p.compensation_phases) << '\n';
    out << "# config_hash=" << p.config_hash << '\n';
    out << "# seed=" << p.seed << '\n';
    out << "# fidelity=" << fmt(p.fidelity) << '\n';
    out << "segment,t_start_ns,amplitude_2pi_mhz,phase_rad\n";
    const auto schedule = p.schedule();
    const auto env = envelope_of(schedule);
    for (int k = 0; k < p.n_segments; ++k) {
        out << k << ',' << fmt(k * schedule.segment_ns()) << ','
            << fmt(units::to_two_pi_mhz(env.amplitude[k])) << ',' << fmt(p.phases[k]) << '\n';
    }
}

PulseRecord read_pulse_csv(std::istream& in, const std::string& source) {
    std::map<std::string, std::string> meta;
    std::string line;
    int line_no = 0;
    bool header = false;
    PulseRecord p;
    std::vector<double> phases;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                continue;
            }
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            meta[key] = line.substr(eq + 1);
            continue;
        }
        if (!header) {
            if (line != "segment,t_start_ns,amplitude_2pi_mhz,phase_rad") {
                throw ConfigError(where, "header: expected segment,t_start_ns,amplitude_2pi_mhz,phase_rad");
            }
            header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string cells[4];
        for (int i = 0; i < 4; ++i) {
            if (!std::getline(ss, cells[i], ',')) {
                throw ConfigError(where, "row has fewer than 4 columns");
            }
        }
        const long segment = parse_long(cells[0], where, "segment");
        if (segment != static_cast<long>(phases.size())) {
            throw ConfigError(where, "segment: expected " + std::to_string(phases.size()) +
                                         ", got " + cells[0]);
        }
        parse_double(cells[1], where, "t_start_ns");
        parse_double(cells[2], where, "amplitude_2pi_mhz");
        phases.push_back(parse_double(cells[3], where, "phase_rad"));
    }
    if (!header) {
        throw ConfigError(source, "header: missing segment table");
    }
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = meta.find(key);
        if (it == meta.end()) {
            throw ConfigError(source, key + ": missing metadata line '# " + key + "=...'");
        }
        return it->second;
    };
    p.n_targets = static_cast<int>(parse_long(need("n_targets"), source, "n_targets"));
    p.radius_um = parse_double(need("radius_um"), source, "radius_um");
    p.duration_ns = parse_double(need("duration_ns"), source, "duration_ns");
    p.n_segments = static_cast<int>(parse_long(need("n_segments"), source, "n_segments"));
    p.ramp_ns = parse_double(need("ramp_ns"), source, "ramp_ns");
    p.omega_max = units::from_two_pi_mhz(
        parse_double(need("omega_max_2pi_mhz"), source, "omega_max_2pi_mhz"));
    if (meta.count("compensation_enabled")) {
        const auto& v = meta["compensation_enabled"];
        if (v != "true" && v != "false") {
            throw ConfigError(source, "compensation_enabled: expected true or false");
        }
        p.compensation_enabled = v == "true";
    }
    if (meta.count("compensation_phases_rad")) {
        p.compensation_phases =
            split_doubles(meta["compensation_phases_rad"], source, "compensation_phases_rad");
    }
    if (meta.count("config_hash")) {
        p.config_hash = meta["config_hash"];
    }
    if (meta.count("seed") && !meta["seed"].empty()) {
        try {
            p.seed = std::stoull(meta["seed"]);
        } catch (const std::exception&) {
            throw ConfigError(source, "seed: expected an unsigned integer");
        }
    }
    if (meta.count("fidelity")) {
        p.fidelity = parse_double(meta["fidelity"], source, "fidelity");
    }
    p.phases = std::move(phases);
    if (static_cast<int>(p.phases.size()) < p.n_segments) {
        throw ConfigError(source, "phase_rad: file truncated, " + std::to_string(p.phases.size()) +
                                      " of " + std::to_string(p.n_segments) + " segments present");
    }
    try {
        p.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source, e.what());
    }
    return p;
}

void write_pulse_json(std::ostream& out, const PulseRecord& p) {
    p.validate();
    json j;
    j["format"] = "rydgate-pulse-1";
    j["n_targets"] = p.n_targets;
    j["radius_um"] = p.radius_um;
    j["duration_ns"] = p.duration_ns;
    j["n_segments"] = p.n_segments;
    j["ramp_ns"] = p.ramp_ns;
    j["omega_max_2pi_mhz"] = units::to_two_pi_mhz(p.omega_max);
    j["phases_rad"] = p.phases;
    j["compensation_enabled"] = p.compensation_enabled;
    j["compensation_phases_rad"] = p.compensation_phases;
    j["provenance"] = {{"config_hash", p.config_hash},
                       {"seed", p.seed},
                       {"fidelity", p.fidelity},
                       {"tool_version", kToolVersion}};
    out << j.dump(2) << '\n';
}

PulseRecord read_pulse_json(std::istream& in, const std::string& source) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception&) {
        throw ConfigError(source, "malformed JSON");
    }
    PulseRecord p;
    auto field = [&](const char* key) -> const json& {
        if (!j.contains(key)) {
            throw ConfigError(source, std::string(key) + ": missing");
        }
        return j.at(key);
    };
    try {
        p.n_targets = field("n_targets").get<int>();
        p.radius_um = field("radius_um").get<double>();
        p.duration_ns = field("duration_ns").get<double>();
        p.n_segments = field("n_segments").get<int>();
        p.ramp_ns = field("ramp_ns").get<double>();
        p.omega_max = units::from_two_pi_mhz(field("omega_max_2pi_mhz").get<double>());
        p.phases = field("phases_rad").get<std::vector<double>>();
        p.compensation_enabled = j.value("compensation_enabled", true);
        p.compensation_phases = j.value("compensation_phases_rad", std::vector<double>{});
        if (j.contains("provenance")) {
            const auto& prov = j.at("provenance");
            p.config_hash = prov.value("config_hash", "");
            p.seed = prov.value("seed", std::uint64_t{0});
            p.fidelity = prov.value("fidelity", -1.0);
        }
    } catch (const json::type_error& e) {
        throw ConfigError(source, std::string("wrong field type: ") + e.what());
    }
    try {
        p.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source, e.what());
    }
    return p;
}

PulseRecord load_pulse(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string(), "cannot open pulse file");
    }
    if (path.extension() == ".json") {
        return read_pulse_json(in, path.string());
    }
    return read_pulse_csv(in, path.string());
}

void write_training_result_json(std::ostream& out, const TrainingResult& r, int n_targets,
                                const std::string& config_hash) {
    json j;
    j["format"] = "rydgate-training-result-1";
    j["fidelity"] = r.final_fidelity;
    j["fidelity_std"] = r.final_std;
    j["per_cz_error"] = per_cz_error(std::clamp(r.final_fidelity, 0.0, 1.0), n_targets);
    j["validation_fidelity"] = r.validation_fidelity;
    j["best_iteration"] = r.best_iteration;
    j["iterations_run"] = r.iterations_run;
    j["stopped_early"] = r.stopped_early;
    j["max_phase_jump_rad"] = r.max_phase_jump;
    j["phases_rad"] = std::vector<double>(r.best.phases().begin(), r.best.phases().end());
    j["compensation_phases_rad"] = std::vector<double>(r.best.theta().begin(), r.best.theta().end());
    j["seed"] = r.seed;
    j["stage"] = r.stage;
    j["config_hash"] = config_hash;
    const OptimizerConfig& c = r.config;
    j["optimizer"] = {{"learning_rate", c.learning_rate},
                      {"final_learning_rate", c.final_learning_rate},
                      {"beta1", c.beta1},
                      {"beta2", c.beta2},
                      {"epsilon", c.epsilon},
                      {"iterations", c.iterations},
                      {"batch_size", c.batch_size},
                      {"lambda_s_initial", c.lambda_s_initial},
                      {"lambda_b", c.lambda_b},
                      {"exponent_b", c.exponent_b},
                      {"tau_rad", c.tau},
                      {"patience", c.patience},
                      {"eval_samples", c.eval_samples},
                      {"validation_samples", c.validation_samples},
                      {"eval_every", c.eval_every},
                      {"initialization", init_name(c.init)},
                      {"smooth_modes", c.smooth_modes},
                      {"ideal_pretrain", c.ideal_pretrain},
                      {"finetune_iterations", c.finetune_iterations},
                      {"finetune_learning_rate", c.finetune_learning_rate},
                      {"robust_iterations", c.robust_iterations},
                      {"robust_batch_size", c.robust_batch_size},
                      {"robust_learning_rate", c.robust_learning_rate},
                      {"refine_tau_rad", c.refine_tau},
                      {"screen_samples", c.screen_samples},
                      {"refine_candidates", c.refine_candidates}};
    out << j.dump(2) << '\n';
}

void write_loss_history_csv(std::ostream& out, const std::vector<HistoryEntry>& history) {
    out << "iteration,total,mean_infidelity,smoothness,lambda_s,learning_rate,validation_fidelity\n";
    for (const auto& h : history) {
        out << h.iteration << ',' << fmt(h.total) << ',' << fmt(h.mean_infidelity) << ','
            << fmt(h.smoothness) << ',' << fmt(h.lambda_s) << ',' << fmt(h.learning_rate) << ',';
        if (h.validation_fidelity >= 0.0) {
            out << fmt(h.validation_fidelity);
        }
        out << '\n';
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw InvalidArgument("cannot write " + tmp.string());
        }
        out << content;
        if (!out.flush()) {
            throw InvalidArgument("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_manifest(const std::filesystem::path& dir, RunManifest m) {
    std::vector<std::string> existing;
    for (const auto& f : m.files) {
        if (std::filesystem::exists(dir / f)) {
            existing.push_back(f);
        }
    }
    json j;
    j["format"] = "rydgate-manifest-1";
    j["command"] = m.command;
    j["tool_version"] = kToolVersion;
    j["config_hash"] = m.config_hash;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    j["seeds"] = m.seeds;
    j["files"] = existing;
    j["status"] = m.status;
    j["partial"] = m.status != "ok";
    if (!m.message.empty()) {
        j["message"] = m.message;
    }
    write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace rydgate
