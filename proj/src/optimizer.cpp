#include "rydgate/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "json.hpp"
#include "rydgate/errors.hpp"
#include "rydgate/parallel.hpp"
#include "rydgate/rng.hpp"

namespace rydgate {

namespace {

enum SeedStream : std::uint64_t {
    kInitStream = 0,
    kBatchStream = 1,
    kValidationStream = 2,
    kFinalStream = 3,
    kScreenStream = 4,
};

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw InvalidArgument(message);
    }
}

}  // namespace

ParamVector::ParamVector(int segments, int atoms)
    : n_segments(segments), n_atoms(atoms), values(segments + atoms, 0.0) {}

bool ParamVector::finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void OptimizerConfig::validate() const {
    require(learning_rate > 0.0 && learning_rate < 1.0, "learning_rate must lie in (0, 1)");
    require(final_learning_rate > 0.0 && final_learning_rate <= learning_rate,
            "final_learning_rate must lie in (0, learning_rate]");
    require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0, 1)");
    require(epsilon > 0.0, "epsilon must be positive");
    require(iterations >= 0, "iterations must be non-negative");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(lambda_s_initial >= 0.0 && lambda_b >= 0.0 && exponent_b >= 0.0,
            "smoothness coefficients must be non-negative");
    require(tau > 0.0, "tau must be positive");
    require(restarts >= 1, "restarts must be at least 1");
    require(patience >= 0, "patience must be non-negative");
    require(eval_samples >= 1, "eval_samples must be at least 1");
    require(validation_samples >= 1, "validation_samples must be at least 1");
    require(eval_every >= 1, "eval_every must be at least 1");
    require(max_phase_jump > 0.0, "max_phase_jump must be positive");
    require(smooth_modes >= 1, "smooth_modes must be at least 1");
    require(finetune_iterations >= 0, "finetune_iterations must be non-negative");
    require(finetune_learning_rate > 0.0 && finetune_learning_rate < 1.0,
            "finetune_learning_rate must lie in (0, 1)");
    require(robust_iterations >= 0, "robust_iterations must be non-negative");
    require(robust_batch_size >= 1, "robust_batch_size must be at least 1");
    require(robust_learning_rate > 0.0 && robust_learning_rate < 1.0,
            "robust_learning_rate must lie in (0, 1)");
    require(refine_tau >= 0.0, "refine_tau must be non-negative");
    require(screen_samples >= 1, "screen_samples must be at least 1");
    require(refine_candidates >= 1, "refine_candidates must be at least 1");
}

const char* init_name(OptimizerConfig::Init init) {
    return init == OptimizerConfig::Init::kSmooth ? "smooth" : "uniform";
}

double learning_rate_at(int iteration, const OptimizerConfig& c) {
    if (c.iterations <= 0) {
        return c.learning_rate;
    }
    const double x = std::clamp(static_cast<double>(iteration) / c.iterations, 0.0, 1.0);
    return c.final_learning_rate +
           0.5 * (c.learning_rate - c.final_learning_rate) * (1.0 + std::cos(std::numbers::pi * x));
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const OptimizerConfig& config, int iteration) {
    if (grad.size() != params.size()) {
        throw InvalidArgument("gradient and parameter sizes differ");
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw InvalidArgument("Adam moments do not match the parameter vector");
    }
    ++state.step;
    const double lr = learning_rate_at(iteration, config);
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grad[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + config.epsilon);
    }
}

double anneal_lambda_s(int iteration, int total_iterations, double lambda_s_initial) {
    if (total_iterations <= 0) {
        return 0.0;
    }
    const double half = 0.5 * total_iterations;
    const double x = static_cast<double>(iteration) / half;
    return x >= 1.0 ? 0.0 : lambda_s_initial * (1.0 - x);
}

LossGradient loss_gradient(const ParamVector& params, const LossContext& context) {
    if (!context.model) {
        throw InvalidArgument("loss context has no fidelity model");
    }
    if (!params.finite()) {
        throw NumericalFailure("non-finite parameters");
    }
    const auto eval = context.model->evaluate(params.phases(), params.theta(), context.batch, true);
    LossGradient out;
    out.mean_fidelity = eval.mean;
    out.grad.assign(params.values.size(), 0.0);
    const double cost =
        smoothness_gradient(params.phases(), context.smoothness,
                            std::span<double>(out.grad.data(), params.n_segments));
    for (int k = 0; k < params.n_segments; ++k) {
        out.grad[k] -= eval.phase_grad[k];
    }
    for (int j = 0; j < params.n_atoms; ++j) {
        out.grad[params.n_segments + j] -= eval.theta_grad[j];
    }
    // Unclamped mean so the loss matches its gradient.
    double raw = 0.0;
    for (double f : eval.fidelities) {
        raw += f;
    }
    out.loss.mean_infidelity = 1.0 - raw / static_cast<double>(eval.fidelities.size());
    out.loss.smoothness_cost = cost;
    out.loss.total = out.loss.mean_infidelity + cost;
    if (!std::isfinite(out.loss.total) ||
        !std::all_of(out.grad.begin(), out.grad.end(), [](double g) { return std::isfinite(g); })) {
        throw NumericalFailure("non-finite loss or gradient");
    }
    return out;
}

double loss_value(const ParamVector& params, const LossContext& context) {
    const auto eval = context.model->evaluate(params.phases(), params.theta(), context.batch, false);
    double raw = 0.0;
    for (double f : eval.fidelities) {
        raw += f;
    }
    return 1.0 - raw / static_cast<double>(eval.fidelities.size()) +
           smoothness_cost(params.phases(), context.smoothness);
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step) {
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        point[i] = x[i] + step;
        const double up = f(point);
        point[i] = x[i] - step;
        const double down = f(point);
        point[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double max_phase_jump(std::span<const double> phases) {
    double jump = 0.0;
    for (std::size_t i = 0; i + 1 < phases.size(); ++i) {
        jump = std::max(jump, std::abs(phases[i + 1] - phases[i]));
    }
    return jump;
}

namespace {

using nlohmann::json;

struct TrainState {
    int next_iteration = 0;
    ParamVector params;
    AdamState adam;
    ParamVector best;
    double best_validation = -1.0;
    bool best_within_jump = false;
    int best_iteration = -1;
    double best_loss = std::numeric_limits<double>::infinity();
    int stale = 0;
    std::vector<HistoryEntry> history;
};

json history_to_json(const std::vector<HistoryEntry>& history) {
    json out = json::array();
    for (const auto& h : history) {
        out.push_back({h.iteration, h.total, h.mean_infidelity, h.smoothness, h.lambda_s,
                       h.learning_rate, h.validation_fidelity});
    }
    return out;
}

std::vector<HistoryEntry> history_from_json(const json& in) {
    std::vector<HistoryEntry> out;
    for (const auto& row : in) {
        out.push_back({row.at(0).get<int>(), row.at(1).get<double>(), row.at(2).get<double>(),
                       row.at(3).get<double>(), row.at(4).get<double>(), row.at(5).get<double>(),
                       row.at(6).get<double>()});
    }
    return out;
}

void save_checkpoint(const std::string& path, const TrainState& s, std::uint64_t seed) {
    json j;
    j["format"] = "rydgate-checkpoint-1";
    j["seed"] = seed;
    j["next_iteration"] = s.next_iteration;
    j["n_segments"] = s.params.n_segments;
    j["n_atoms"] = s.params.n_atoms;
    j["params"] = s.params.values;
    j["adam_m"] = s.adam.m;
    j["adam_v"] = s.adam.v;
    j["adam_step"] = s.adam.step;
    j["best_params"] = s.best.values;
    j["best_validation"] = s.best_validation;
    j["best_within_jump"] = s.best_within_jump;
    j["best_iteration"] = s.best_iteration;
    j["best_loss"] = std::isfinite(s.best_loss) ? json(s.best_loss) : json(nullptr);
    j["stale"] = s.stale;
    j["history"] = history_to_json(s.history);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) {
            throw InvalidArgument("cannot write checkpoint " + tmp);
        }
        out << j.dump();
    }
    std::filesystem::rename(tmp, path);
}

bool load_checkpoint(const std::string& path, TrainState& s, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) {
        return false;
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument("corrupt checkpoint " + path + ": " + e.what());
    }
    if (j.value("format", "") != "rydgate-checkpoint-1" || j.at("seed").get<std::uint64_t>() != seed ||
        j.at("n_segments").get<int>() != s.params.n_segments ||
        j.at("n_atoms").get<int>() != s.params.n_atoms) {
        throw InvalidArgument("checkpoint " + path + " does not match this run");
    }
    s.next_iteration = j.at("next_iteration").get<int>();
    s.params.values = j.at("params").get<std::vector<double>>();
    s.adam.m = j.at("adam_m").get<std::vector<double>>();
    s.adam.v = j.at("adam_v").get<std::vector<double>>();
    s.adam.step = j.at("adam_step").get<long>();
    s.best.values = j.at("best_params").get<std::vector<double>>();
    s.best_validation = j.at("best_validation").get<double>();
    s.best_within_jump = j.at("best_within_jump").get<bool>();
    s.best_iteration = j.at("best_iteration").get<int>();
    s.best_loss = j.at("best_loss").is_null() ? std::numeric_limits<double>::infinity()
                                              : j.at("best_loss").get<double>();
    s.stale = j.at("stale").get<int>();
    s.history = history_from_json(j.at("history"));
    return true;
}

}  // namespace

namespace {

TrainingResult train_stage(const OptimizerConfig& config, const ProblemSpec& problem,
                           const TrainHooks& hooks) {
    const FidelityModel model(problem);
    const int n_seg = problem.n_segments;
    const int n_atoms = problem.layout.n_atoms();
    const bool motion = problem.noise.has_motion();

    TrainState s;
    s.params = ParamVector(n_seg, n_atoms);
    if (!hooks.initial_phases.empty()) {
        const auto len = static_cast<int>(hooks.initial_phases.size());
        if (len != n_seg && len != n_seg + n_atoms) {
            throw InvalidArgument("warm-start phases have the wrong length");
        }
        std::copy(hooks.initial_phases.begin(), hooks.initial_phases.end(),
                  s.params.values.begin());
    } else {
        Rng rng(derive_seed(config.seed, kInitStream));
        std::uniform_real_distribution<double> uniform(-std::numbers::pi, std::numbers::pi);
        if (config.init == OptimizerConfig::Init::kUniform) {
            for (int k = 0; k < n_seg; ++k) {
                s.params.values[k] = uniform(rng);
            }
        } else {
            const double offset = uniform(rng);
            std::vector<double> coeff(config.smooth_modes);
            for (int m = 0; m < config.smooth_modes; ++m) {
                coeff[m] = uniform(rng) / (m + 1);
            }
            for (int k = 0; k < n_seg; ++k) {
                const double x = (k + 0.5) / n_seg;
                double v = offset;
                for (int m = 0; m < config.smooth_modes; ++m) {
                    v += coeff[m] * std::cos(std::numbers::pi * (m + 1) * x);
                }
                s.params.values[k] = v;
            }
        }
    }
    s.best = s.params;
    if (!hooks.checkpoint_path.empty()) {
        load_checkpoint(hooks.checkpoint_path, s, config.seed);
    }

    const auto validation = sample_displacements(
        problem.noise, n_atoms, motion ? config.validation_samples : 1,
        derive_seed(config.seed, kValidationStream));

    auto consider = [&](const ParamVector& p, int iteration) {
        const double v = model.evaluate(p.phases(), p.theta(), validation, false).mean;
        // The jump bound only ranks candidates when the large-jump penalty is on.
        const bool within =
            config.lambda_b <= 0.0 || max_phase_jump(p.phases()) < config.max_phase_jump;
        const bool better = (within && !s.best_within_jump) ||
                            (within == s.best_within_jump && v > s.best_validation);
        if (better) {
            s.best = p;
            s.best_validation = v;
            s.best_within_jump = within;
            s.best_iteration = iteration;
        }
        return v;
    };
    if (s.best_validation < 0.0) {
        consider(s.params, -1);
    }

    // A checkpoint written at an early stop resumes as stopped.
    bool stopped = config.patience > 0 && s.stale >= config.patience;
    for (int it = s.next_iteration; !stopped && it < config.iterations; ++it) {
        const auto batch = sample_displacements(problem.noise, n_atoms,
                                                motion ? config.batch_size : 1,
                                                derive_seed(config.seed, kBatchStream, it));
        LossContext ctx{&model, batch,
                        {anneal_lambda_s(it, config.iterations, config.lambda_s_initial),
                         config.lambda_b, config.exponent_b, config.tau}};
        LossGradient lg;
        try {
            lg = loss_gradient(s.params, ctx);
        } catch (const NumericalFailure& e) {
            throw NumericalFailure(std::string(e.what()) + " (seed " +
                                   std::to_string(config.seed) + ", iteration " +
                                   std::to_string(it) + ")");
        }
        HistoryEntry entry{it,
                           lg.loss.total,
                           lg.loss.mean_infidelity,
                           lg.loss.smoothness_cost,
                           ctx.smoothness.lambda_s,
                           learning_rate_at(it, config),
                           -1.0};
        adam_step(s.params.values, lg.grad, s.adam, config, it);
        if (!s.params.finite()) {
            throw NumericalFailure("parameters became non-finite at iteration " +
                                   std::to_string(it));
        }
        const bool last = it + 1 == config.iterations;
        if ((it + 1) % config.eval_every == 0 || last) {
            entry.validation_fidelity = consider(s.params, it);
        }

        // Plateau detection only once the small-jump penalty has been annealed away.
        if (ctx.smoothness.lambda_s == 0.0) {
            if (lg.loss.total < s.best_loss - 1e-12) {
                s.best_loss = lg.loss.total;
                s.stale = 0;
            } else {
                ++s.stale;
            }
        }
        s.history.push_back(entry);
        s.next_iteration = it + 1;
        if (hooks.on_iteration) {
            hooks.on_iteration(entry);
        }
        if (config.patience > 0 && s.stale >= config.patience && !last) {
            if (entry.validation_fidelity < 0.0) {
                s.history.back().validation_fidelity = consider(s.params, it);
            }
            stopped = true;
        }
        if (!hooks.checkpoint_path.empty() &&
            (stopped || last || (it + 1) % std::max(1, hooks.checkpoint_every) == 0)) {
            save_checkpoint(hooks.checkpoint_path, s, config.seed);
        }
        if (stopped) {
            break;
        }
    }

    TrainingResult result;
    result.best = s.best;
    result.validation_fidelity = s.best_validation;
    result.best_iteration = s.best_iteration;
    result.iterations_run = static_cast<int>(s.history.size());
    result.stopped_early = stopped || (s.next_iteration < config.iterations);
    result.history = std::move(s.history);
    result.seed = config.seed;
    result.config = config;
    result.max_phase_jump = max_phase_jump(s.best.phases());
    const auto final_samples = sample_displacements(
        problem.noise, n_atoms, motion ? config.eval_samples : 1,
        derive_seed(config.seed, kFinalStream));
    const auto final_eval = model.evaluate(s.best.phases(), s.best.theta(), final_samples, false);
    result.final_fidelity = final_eval.mean;
    result.final_std = final_eval.std;
    return result;
}

}  // namespace

namespace {

bool is_noisy(const ProblemSpec& problem) {
    return problem.noise.has_decay() || problem.noise.has_motion();
}

TrainHooks stage_hooks(const TrainHooks& hooks, const std::string& suffix, int offset,
                       std::vector<double> initial) {
    TrainHooks h = hooks;
    h.initial_phases = std::move(initial);
    if (!hooks.checkpoint_path.empty()) {
        h.checkpoint_path += suffix;
    }
    if (hooks.on_iteration && offset > 0) {
        h.on_iteration = [cb = hooks.on_iteration, offset](const HistoryEntry& e) {
            HistoryEntry shifted = e;
            shifted.iteration += offset;
            cb(shifted);
        };
    }
    return h;
}

// Appends `next` to `acc` as if it had run right after it.
void append_stage(TrainingResult& acc, TrainingResult next) {
    const int offset = acc.iterations_run;
    for (auto& e : next.history) {
        e.iteration += offset;
    }
    next.history.insert(next.history.begin(), acc.history.begin(), acc.history.end());
    next.best_iteration += offset;
    next.iterations_run += offset;
    next.stopped_early = next.stopped_early || acc.stopped_early;
    acc = std::move(next);
}

TrainingResult pretrain(const OptimizerConfig& config, const ProblemSpec& problem,
                        const TrainHooks& hooks) {
    ProblemSpec ideal = problem;
    ideal.noise = NoiseModel::ideal();
    OptimizerConfig c = config;
    c.eval_samples = 1;
    return train_stage(c, ideal, stage_hooks(hooks, ".ideal", 0, hooks.initial_phases));
}

TrainingResult refine(const OptimizerConfig& config, const ProblemSpec& problem,
                      const TrainHooks& hooks, TrainingResult acc) {
    OptimizerConfig base = config;
    base.lambda_s_initial = 0.0;
    base.patience = 0;
    if (config.refine_tau > 0.0) {
        base.tau = config.refine_tau;
    }

    if (config.robust_iterations > 0 && problem.noise.has_motion()) {
        ProblemSpec motion = problem;
        motion.noise.decay_rate_per_us = 0.0;
        OptimizerConfig c = base;
        c.iterations = config.robust_iterations;
        c.batch_size = config.robust_batch_size;
        c.learning_rate = config.robust_learning_rate;
        c.final_learning_rate = std::min(config.final_learning_rate, config.robust_learning_rate);
        c.validation_samples = config.screen_samples;
        c.eval_samples = config.screen_samples;
        append_stage(acc, train_stage(c, motion,
                                      stage_hooks(hooks, ".robust", acc.iterations_run,
                                                  acc.best.values)));
    }

    OptimizerConfig c = base;
    c.iterations = config.finetune_iterations;
    c.learning_rate = config.finetune_learning_rate;
    c.final_learning_rate = std::min(config.final_learning_rate, config.finetune_learning_rate);
    append_stage(acc, train_stage(c, problem,
                                  stage_hooks(hooks, ".noisy", acc.iterations_run, acc.best.values)));
    acc.config = config;
    acc.stage = "refined";
    return acc;
}

}  // namespace

TrainingResult train(const OptimizerConfig& config, const ProblemSpec& problem,
                     const TrainHooks& hooks) {
    config.validate();
    if (!config.ideal_pretrain || !is_noisy(problem)) {
        return train_stage(config, problem, hooks);
    }
    return refine(config, problem, hooks, pretrain(config, problem, hooks));
}

std::uint64_t restart_seed(std::uint64_t root, int restart) {
    return derive_seed(root, 0x5eed, static_cast<std::uint64_t>(restart));
}

MultiRestartResult multi_restart(const OptimizerConfig& config, const ProblemSpec& problem,
                                 const TrainHooks& hooks) {
    config.validate();
    const int n = config.restarts;
    const bool staged = config.ideal_pretrain && is_noisy(problem);
    std::vector<std::optional<TrainingResult>> slots(n);
    std::vector<std::string> errors(n);
    parallel_for(n, [&](std::size_t r) {
        OptimizerConfig c = config;
        c.seed = restart_seed(config.seed, static_cast<int>(r));
        TrainHooks h = hooks;
        if (!h.checkpoint_path.empty()) {
            h.checkpoint_path += ".r" + std::to_string(r);
        }
        try {
            slots[r] = staged ? pretrain(c, problem, h) : train(c, problem, h);
        } catch (const NumericalFailure& e) {
            errors[r] = e.what();
        }
    });

    if (staged) {
        // Score every pretrained restart on one shared noisy sample set.
        const FidelityModel model(problem);
        const auto samples = sample_displacements(
            problem.noise, problem.layout.n_atoms(),
            problem.noise.has_motion() ? config.screen_samples : 1,
            derive_seed(config.seed, kScreenStream));
        std::vector<int> order;
        for (int r = 0; r < n; ++r) {
            if (!slots[r]) {
                continue;
            }
            const auto ev = model.evaluate(slots[r]->best.phases(), slots[r]->best.theta(),
                                           samples, false);
            slots[r]->final_fidelity = ev.mean;
            slots[r]->final_std = ev.std;
            slots[r]->stage = "screened";
            slots[r]->config = config;
            order.push_back(r);
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return slots[a]->final_fidelity > slots[b]->final_fidelity;
        });
        const int k = std::min<int>(config.refine_candidates, static_cast<int>(order.size()));
        for (int i = 0; i < k; ++i) {
            const int r = order[i];
            OptimizerConfig c = config;
            c.seed = restart_seed(config.seed, r);
            TrainHooks h = hooks;
            if (!h.checkpoint_path.empty()) {
                h.checkpoint_path += ".r" + std::to_string(r);
            }
            try {
                slots[r] = refine(c, problem, h, std::move(*slots[r]));
            } catch (const NumericalFailure& e) {
                slots[r].reset();
                errors[r] = e.what();
            }
        }
    }

    MultiRestartResult out;
    for (int r = 0; r < n; ++r) {
        if (slots[r]) {
            out.results.push_back(std::move(*slots[r]));
        } else {
            out.failures.push_back("restart " + std::to_string(r) + ": " + errors[r]);
        }
    }
    if (out.results.empty()) {
        throw NumericalFailure("all " + std::to_string(n) + " restarts failed; first: " +
                               out.failures.front());
    }
    // Screened-only restarts never outrank a refined one.
    auto rank = [](const TrainingResult& t) { return t.stage != "screened"; };
    for (std::size_t i = 1; i < out.results.size(); ++i) {
        const auto& a = out.results[i];
        const auto& b = out.results[out.best_index];
        if (rank(a) > rank(b) || (rank(a) == rank(b) && a.final_fidelity > b.final_fidelity)) {
            out.best_index = i;
        }
    }
    return out;
}

}  // namespace rydgate
