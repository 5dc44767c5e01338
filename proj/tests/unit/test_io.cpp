#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rydgate/config.hpp"
#include "rydgate/errors.hpp"
#include "rydgate/io.hpp"
#include "rydgate/sweep.hpp"
#include "rydgate/units.hpp"
#include "support.hpp"

using namespace rydgate;

namespace {

PulseRecord sample_pulse() {
    PulseRecord p;
    p.n_targets = 2;
    p.radius_um = 3.5;
    p.duration_ns = 575.0;
    p.n_segments = 100;
    p.ramp_ns = 10.0;
    p.omega_max = units::kTwoPi * 10.0;
    p.phases = test::random_phases(100, 31);
    p.phases[3] = 1.0 / 3.0;
    p.compensation_phases = {0.1, -2.0 / 7.0, 1e-17};
    p.config_hash = "0123456789abcdef";
    p.seed = 18446744073709551557ULL;
    p.fidelity = 0.99551234567;
    return p;
}

void check_same(const PulseRecord& a, const PulseRecord& b) {
    CHECK(a.n_targets == b.n_targets);
    CHECK(a.radius_um == b.radius_um);
    CHECK(a.duration_ns == b.duration_ns);
    CHECK(a.n_segments == b.n_segments);
    CHECK(a.ramp_ns == b.ramp_ns);
    CHECK(a.omega_max == b.omega_max);
    CHECK(a.phases == b.phases);
    CHECK(a.compensation_phases == b.compensation_phases);
    CHECK(a.compensation_enabled == b.compensation_enabled);
    CHECK(a.config_hash == b.config_hash);
    CHECK(a.seed == b.seed);
    CHECK(a.fidelity == b.fidelity);
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("pulse csv round-trips and reaches a fixpoint") {
    const PulseRecord p = sample_pulse();
    std::stringstream first;
    write_pulse_csv(first, p);
    const std::string text = first.str();
    const PulseRecord back = read_pulse_csv(first);
    check_same(p, back);
    std::stringstream second;
    write_pulse_csv(second, back);
    CHECK(second.str() == text);
    // Segment drives survive the trip.
    const PulseSchedule s0 = p.schedule();
    const PulseSchedule s1 = back.schedule();
    for (int k = 0; k < p.n_segments; ++k) {
        CHECK(segment_drive(s0, k).amplitude == segment_drive(s1, k).amplitude);
        CHECK(segment_drive(s0, k).phase == segment_drive(s1, k).phase);
    }
}

TEST_CASE("pulse json round-trips") {
    const PulseRecord p = sample_pulse();
    std::stringstream buf;
    write_pulse_json(buf, p);
    check_same(p, read_pulse_json(buf));
}

TEST_CASE("truncated pulse csv is an error") {
    std::stringstream full;
    write_pulse_csv(full, sample_pulse());
    std::string text = full.str();
    text.resize(text.size() * 2 / 3);
    text = text.substr(0, text.rfind('\n') + 1);
    std::stringstream cut(text);
    CHECK_THROWS_AS(read_pulse_csv(cut), ConfigError);
}

TEST_CASE("malformed pulse files name the offending field") {
    std::stringstream full;
    write_pulse_json(full, sample_pulse());
    auto j = nlohmann::json::parse(full.str());
    j["radius_um"] = -1.0;
    std::stringstream bad(j.dump());
    try {
        read_pulse_json(bad, "p.json");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("radius_um") != std::string::npos);
    }
    std::stringstream csv;
    write_pulse_csv(csv, sample_pulse());
    std::string text = csv.str();
    const auto pos = text.find("# duration_ns=");
    REQUIRE(pos != std::string::npos);
    text.erase(pos, text.find('\n', pos) - pos + 1);
    std::stringstream missing(text);
    try {
        read_pulse_csv(missing, "p.csv");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("duration_ns") != std::string::npos);
    }
}

TEST_CASE("sweep csv round-trips") {
    SweepResult r;
    r.durations_ns = {100.0, 150.0};
    r.radii_um = {2.25, 3.5};
    for (double rad : r.radii_um) {
        for (double t : r.durations_ns) {
            SweepCell c;
            c.duration_ns = t;
            c.radius_um = rad;
            c.best_fidelity = 0.1 + t / 1000.0 + rad / 7.0;
            c.restarts = 20;
            c.seed = cell_seed(4, r.cells.size());
            r.cells.push_back(c);
        }
    }
    std::stringstream buf;
    write_sweep_csv(buf, r);
    const std::string text = buf.str();
    const auto cells = read_sweep_csv(buf);
    REQUIRE(cells.size() == 4);
    SweepResult again = r;
    again.cells = cells;
    std::stringstream second;
    write_sweep_csv(second, again);
    CHECK(second.str() == text);
    CHECK(r.at(1, 0).radius_um == 3.5);
    CHECK(r.at(1, 0).duration_ns == 100.0);
    std::stringstream plot;
    write_sweep_plot_csv(plot, r);
    std::string header;
    std::getline(plot, header);
    CHECK(header.find("duration_ns") == 0);
}

TEST_CASE("empty sweep grid is rejected") {
    SweepSpec s;
    s.radii_um = {3.5};
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("config defaults mirror the parameter table") {
    const ExperimentConfig c = parse_config("{}");
    CHECK(c.n_targets == 2);
    CHECK(c.noise.decay_rate_per_us == doctest::Approx(1.0 / 88.0).epsilon(1e-14));
    CHECK(c.noise.branch_to_0 == 0.1354);
    CHECK(c.noise.branch_to_1 == 0.2504);
    CHECK(c.noise.branch_leak == 0.6142);
    CHECK(c.noise.sigma_x_um == 0.014);
    CHECK(c.noise.sigma_z_um == 0.16);
    CHECK(c.constants.c6 == doctest::Approx(units::kTwoPi * 862690.0).epsilon(1e-15));
    CHECK(c.constants.omega_max == doctest::Approx(units::kTwoPi * 10.0).epsilon(1e-15));
    CHECK(c.ramp_ns == 10.0);
    CHECK(c.n_segments == 100);
    CHECK(c.optimizer.eval_samples == 10000);
    CHECK(c.optimizer.restarts == 50);
    CHECK(c.optimizer.tau == 0.1);
}

TEST_CASE("config errors carry line and key") {
    const std::string text = "{\n  \"geometry\": {\n    \"radius_um\": -3.5\n  }\n}\n";
    try {
        parse_config(text, "exp.json");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("exp.json:3") != std::string::npos);
        CHECK(msg.find("geometry.radius_um") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("{\"pulse\": {\"duration\": 5}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"bogus\": 1}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"gate\": {\"n_targets\": 2,}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"optimizer\": {\"initialization\": \"zeros\"}}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{\"sweep\": {\"durations_ns\": [], \"radii_um\": [3]}}"),
                    ConfigError);
}

TEST_CASE("canonical config is a fixpoint with a stable hash") {
    const std::string text = R"({
      "gate": {"n_targets": 3},
      "geometry": {"radius_um": 4.0},
      "noise": {"rydberg_lifetime_us": 100, "sigma_z_um": 0.1},
      "optimizer": {"tau_rad": 0.8, "initialization": "smooth", "ideal_pretrain": true,
                    "robust_iterations": 500, "refine_tau_rad": 0.95, "refine_candidates": 3},
      "sweep": {"durations_ns": [200, 400], "radii_um": [3, 4]},
      "seed": 12
    })";
    const ExperimentConfig a = parse_config(text);
    const std::string canon = config_to_json(a);
    const ExperimentConfig b = parse_config(canon);
    CHECK(config_to_json(b) == canon);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(b.optimizer.init == OptimizerConfig::Init::kSmooth);
    CHECK(b.optimizer.ideal_pretrain);
    CHECK(b.optimizer.robust_iterations == 500);
    CHECK(b.optimizer.refine_tau == 0.95);
    CHECK(b.optimizer.refine_candidates == 3);
    CHECK(b.noise.decay_rate_per_us == doctest::Approx(0.01));
    ExperimentConfig c = a;
    c.seed = 13;
    CHECK(config_hash(c) != config_hash(a));
}

TEST_CASE("explicit positions override the circle") {
    const ExperimentConfig c =
        parse_config(R"({"gate": {"n_targets": 1}, "geometry": {"positions_um": [[0,0,0],[0,3,0]]}})");
    const AtomLayout l = c.layout();
    CHECK(l.n_atoms() == 2);
    CHECK(l.positions[1][1] == 3.0);
    CHECK_THROWS_AS(
        parse_config(R"({"gate": {"n_targets": 2}, "geometry": {"positions_um": [[0,0,0],[0,3,0]]}})"),
        ConfigError);
}

TEST_CASE("manifest lists only files that exist") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rydgate_manifest_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file_atomic(dir / "a.csv", "x\n");
    RunManifest m;
    m.command = "optimize";
    m.config_hash = "abc";
    m.files = {"a.csv", "missing.csv"};
    m.seeds = {1, 2};
    write_manifest(dir, m);
    std::ifstream in(dir / "manifest.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["files"].size() == 1);
    CHECK(j["files"][0] == "a.csv");
    CHECK(j["tool_version"] == kToolVersion);
    CHECK(j["seeds"].size() == 2);
    CHECK(!fs::exists(dir / "manifest.json.tmp"));
    fs::remove_all(dir);
}

}
