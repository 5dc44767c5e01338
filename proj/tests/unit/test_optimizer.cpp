#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "rydgate/errors.hpp"
#include "rydgate/optimizer.hpp"
#include "support.hpp"

using namespace rydgate;

namespace {

ProblemSpec small_problem(bool noisy) {
    ProblemSpec p;
    p.layout = place_atoms(1, 3.5);
    p.target = GateTarget{1, {}, true};
    p.duration_ns = 150.0;
    p.n_segments = 20;
    p.ramp_ns = 0.0;
    if (noisy) {
        p.noise = NoiseModel::defaults();
    }
    return p;
}

OptimizerConfig quick(int iterations) {
    OptimizerConfig c;
    c.iterations = iterations;
    c.restarts = 1;
    c.eval_samples = 16;
    c.validation_samples = 8;
    c.batch_size = 4;
    c.lambda_s_initial = 0.0;
    c.lambda_b = 0.0;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("first adam step moves by the learning rate") {
    OptimizerConfig c;
    std::vector<double> x{1.0, -2.0, 0.5};
    const std::vector<double> g{1.0, 1.0, 1.0};
    AdamState st;
    adam_step(x, g, st, c, 0);
    const double step = learning_rate_at(0, c) * 1.0 / (1.0 + c.epsilon);
    CHECK(x[0] == doctest::Approx(1.0 - step).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(-2.0 - step).epsilon(1e-14));
    CHECK(step == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("zero gradient leaves params in place") {
    OptimizerConfig c;
    std::vector<double> x{0.3, 0.4};
    AdamState st;
    for (int it = 0; it < 5; ++it) {
        adam_step(x, std::vector<double>{0.0, 0.0}, st, c, it);
    }
    CHECK(x[0] == 0.3);
    CHECK(x[1] == 0.4);
}

TEST_CASE("adam minimizes a quadratic") {
    OptimizerConfig c;
    c.learning_rate = 0.1;
    c.final_learning_rate = 0.01;
    c.iterations = 500;
    std::vector<double> x{2.0, -3.0};
    const std::vector<double> a{0.5, 0.25};
    AdamState st;
    for (int it = 0; it < c.iterations; ++it) {
        adam_step(x, std::vector<double>{2 * (x[0] - a[0]), 2 * (x[1] - a[1])}, st, c, it);
    }
    CHECK(x[0] == doctest::Approx(a[0]).epsilon(1e-3));
    CHECK(x[1] == doctest::Approx(a[1]).epsilon(1e-3));
}

TEST_CASE("learning rate decays from initial to final") {
    OptimizerConfig c;
    c.iterations = 100;
    CHECK(learning_rate_at(0, c) == doctest::Approx(0.01));
    CHECK(learning_rate_at(99, c) == doctest::Approx(0.001).epsilon(1e-3));
    CHECK(learning_rate_at(50, c) < learning_rate_at(10, c));
}

TEST_CASE("small-jump coefficient anneals linearly over the first half") {
    CHECK(anneal_lambda_s(0, 2000, 0.01) == 0.01);
    CHECK(anneal_lambda_s(500, 2000, 0.01) == doctest::Approx(0.005).epsilon(1e-14));
    CHECK(anneal_lambda_s(1000, 2000, 0.01) == 0.0);
    CHECK(anneal_lambda_s(1700, 2000, 0.01) == 0.0);
}

TEST_CASE("central differences of a quadratic") {
    const std::vector<double> a{1.0, -2.0, 0.5};
    const std::vector<double> x{0.3, 0.1, -0.7};
    const auto g = central_difference(
        [&](std::span<const double> v) {
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                s += (v[i] - a[i]) * (v[i] - a[i]);
            }
            return s;
        },
        x, 1e-5);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(g[i] == doctest::Approx(2 * (x[i] - a[i])).epsilon(1e-9));
    }
}

TEST_CASE("loss gradient matches finite differences with penalty on") {
    ProblemSpec p = small_problem(true);
    p.layout = place_atoms(2, 3.5);
    p.target = GateTarget{2, {}, true};
    p.n_segments = 15;
    const FidelityModel model(p);
    const auto batch = sample_displacements(p.noise, 3, 3, 4);
    LossContext ctx{&model, batch, {0.01, 1.0, 2.0, 0.1}};
    ParamVector params(15, 3);
    const auto ph = test::random_phases(18, 13);
    std::copy(ph.begin(), ph.end(), params.values.begin());
    for (int k = 0; k < 15; ++k) {
        params.values[k] *= 0.2;  // mix of quadratic and exponential branches
    }
    const LossGradient lg = loss_gradient(params, ctx);
    const auto fd = central_difference(
        [&](std::span<const double> x) {
            ParamVector q = params;
            std::copy(x.begin(), x.end(), q.values.begin());
            return loss_value(q, ctx);
        },
        params.values, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) {
        CHECK(lg.grad[i] == doctest::Approx(fd[i]).epsilon(1e-5).scale(1e-7));
    }
    CHECK(lg.loss.total == doctest::Approx(loss_value(params, ctx)).epsilon(1e-14));
}

TEST_CASE("non-finite parameters raise a numerical failure") {
    const ProblemSpec p = small_problem(false);
    const FidelityModel model(p);
    const auto batch = sample_displacements(p.noise, 2, 1, 1);
    LossContext ctx{&model, batch, {}};
    ParamVector params(20, 2);
    params.values[4] = std::nan("");
    CHECK_THROWS_AS(loss_gradient(params, ctx), NumericalFailure);
}

TEST_CASE("max phase jump") {
    const std::vector<double> ph{0.0, 0.2, -0.5, -0.4};
    CHECK(max_phase_jump(ph) == doctest::Approx(0.7));
}

TEST_CASE("zero iterations evaluates the initialization") {
    const auto r = train(quick(0), small_problem(false));
    CHECK(r.iterations_run == 0);
    CHECK(r.history.empty());
    CHECK(r.best_iteration == -1);
    CHECK(r.final_fidelity >= 0.0);
    CHECK(r.final_fidelity <= 1.0);
}

TEST_CASE("training is reproducible and improves") {
    const auto a = train(quick(150), small_problem(true));
    const auto b = train(quick(150), small_problem(true));
    CHECK(a.best.values == b.best.values);
    CHECK(a.final_fidelity == b.final_fidelity);
    REQUIRE(a.history.size() == static_cast<std::size_t>(a.iterations_run));
    CHECK(a.validation_fidelity >= 0.0);
    // Best-so-far validation never falls.
    double best = -1.0;
    for (const auto& h : a.history) {
        if (h.validation_fidelity >= 0.0) {
            best = std::max(best, h.validation_fidelity);
        }
    }
    CHECK(a.validation_fidelity >= best - 1e-15);
    CHECK(a.history.back().mean_infidelity < a.history.front().mean_infidelity);
}

TEST_CASE("single-restart search equals one training run") {
    OptimizerConfig c = quick(60);
    const auto multi = multi_restart(c, small_problem(false));
    OptimizerConfig single = c;
    single.seed = restart_seed(c.seed, 0);
    const auto one = train(single, small_problem(false));
    REQUIRE(multi.results.size() == 1);
    CHECK(multi.best().best.values == one.best.values);
}

TEST_CASE("best restart dominates the others") {
    OptimizerConfig c = quick(40);
    c.restarts = 4;
    const auto m = multi_restart(c, small_problem(false));
    REQUIRE(m.results.size() == 4);
    for (const auto& r : m.results) {
        CHECK(m.best().final_fidelity >= r.final_fidelity);
    }
}

TEST_CASE("smooth initialization starts with small jumps") {
    OptimizerConfig c = quick(0);
    c.init = OptimizerConfig::Init::kSmooth;
    ProblemSpec p = small_problem(false);
    p.n_segments = 100;
    const auto r = train(c, p);
    CHECK(r.max_phase_jump < 0.5);
    OptimizerConfig u = quick(0);
    CHECK(train(u, p).max_phase_jump > 1.0);
}

TEST_CASE("interrupted training resumes to the same result") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rydgate_resume_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const OptimizerConfig c = quick(60);
    const ProblemSpec p = small_problem(true);
    const auto uninterrupted = train(c, p);

    TrainHooks hooks;
    hooks.checkpoint_path = (dir / "ckpt").string();
    hooks.checkpoint_every = 10;
    hooks.on_iteration = [](const HistoryEntry& e) {
        if (e.iteration == 34) {
            throw std::runtime_error("simulated crash");
        }
    };
    CHECK_THROWS_AS(train(c, p, hooks), std::runtime_error);
    hooks.on_iteration = nullptr;
    const auto resumed = train(c, p, hooks);
    CHECK(resumed.best.values == uninterrupted.best.values);
    CHECK(resumed.final_fidelity == uninterrupted.final_fidelity);
    CHECK(resumed.history.size() == uninterrupted.history.size());
    fs::remove_all(dir);
}

TEST_CASE("ideal pretrain then noisy fine-tune") {
    OptimizerConfig c = quick(60);
    c.ideal_pretrain = true;
    c.finetune_iterations = 20;
    const auto r = train(c, small_problem(true));
    CHECK(r.iterations_run == 80);
    CHECK(r.history.size() == 80);
    CHECK(r.history[60].iteration == 60);
    CHECK(r.config.ideal_pretrain);
    CHECK(r.stage == "refined");
    // Without noise the pretrain is the whole run.
    CHECK(train(c, small_problem(false)).iterations_run == 60);
}

TEST_CASE("robust stage sits between pretrain and fine-tune") {
    OptimizerConfig c = quick(40);
    c.ideal_pretrain = true;
    c.robust_iterations = 15;
    c.robust_batch_size = 6;
    c.finetune_iterations = 10;
    c.refine_tau = 0.5;
    const auto r = train(c, small_problem(true));
    CHECK(r.iterations_run == 65);
    for (int i = 0; i < 65; ++i) {
        CHECK(r.history[i].iteration == i);
    }
    // Refinement runs without the small-jump term.
    CHECK(r.history[40].lambda_s == 0.0);
    CHECK(r.history.back().lambda_s == 0.0);
    CHECK(r.config.robust_iterations == 15);

    // Decay-only noise has nothing for the motion stage to do.
    ProblemSpec decay_only = small_problem(true);
    decay_only.noise.sigma_x_um = decay_only.noise.sigma_y_um = decay_only.noise.sigma_z_um = 0.0;
    CHECK(train(c, decay_only).iterations_run == 50);
}

TEST_CASE("staged restarts refine only the best screened candidates") {
    OptimizerConfig c = quick(30);
    c.ideal_pretrain = true;
    c.finetune_iterations = 5;
    c.restarts = 4;
    c.refine_candidates = 2;
    c.screen_samples = 8;
    const auto m = multi_restart(c, small_problem(true));
    REQUIRE(m.results.size() == 4);
    int refined = 0;
    for (const auto& r : m.results) {
        if (r.stage == "refined") {
            ++refined;
            CHECK(r.iterations_run == 35);
        } else {
            CHECK(r.stage == "screened");
            CHECK(r.iterations_run == 30);
        }
    }
    CHECK(refined == 2);
    CHECK(m.best().stage == "refined");
    // Same seeds, same outcome.
    const auto again = multi_restart(c, small_problem(true));
    CHECK(again.best().best.values == m.best().best.values);
}

TEST_CASE("invalid optimizer settings are rejected") {
    OptimizerConfig c;
    c.learning_rate = 1.5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = OptimizerConfig{};
    c.restarts = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

}
