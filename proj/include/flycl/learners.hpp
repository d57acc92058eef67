#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "flycl/fly_model.hpp"
#include "flycl/io.hpp"
#include "flycl/tasks.hpp"

namespace flycl {

enum class Strategy : std::uint8_t { Sgd = 0, Ewc = 1, Si = 2, L2Init = 3, ShrinkPerturb = 4, Cbp = 5 };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct SgdConfig {
    double learning_rate = 0.01;
};

struct ClipConfig {
    double max_norm = 0.0;  // <= 0 disables clipping
    bool enabled() const { return max_norm > 0.0; }
};

void sgd_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads, const SgdConfig& cfg);

double global_grad_norm(const std::vector<ParamRef>& grads);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
double clip_gradients(const std::vector<ParamRef>& grads, const ClipConfig& cfg);

// --- elastic weight consolidation ---

struct EwcState {
    double lambda = 0.0;
    Vec fisher;  // diagonal, accumulated across consolidations
    Vec anchor;
    int tasks_consolidated = 0;
};

EwcState make_ewc_state(double lambda, std::int64_t n_params);

// penalty = (lambda/2) sum F (theta - anchor)^2, gradient lambda F (theta - anchor)
std::pair<double, Vec> ewc_penalty_and_grad(const Vec& params, const EwcState& state);

// Diagonal Fisher over task_data: per sample, the squared gradient of the
// log-likelihood of the model's predicted label (argmax over the allowed
// classes), averaged and added into the running accumulator. The anchor
// moves to the current parameters.
void ewc_consolidate(FlyModel& model, const Dataset& task_data, const std::vector<std::uint8_t>& allowed,
                     EwcState& state);

// --- synaptic intelligence ---

struct SiState {
    double c = 0.0;
    double xi = 1e-3;
    Vec omega_running;  // path-integral contributions within the current task
    Vec Omega;          // consolidated importances
    Vec anchor;
    Vec task_start;
};

SiState make_si_state(double c, double xi, const Vec& params_now);

// omega_k += -grad_k * delta_k
void si_accumulate_step(SiState& state, const Vec& grads, const Vec& param_delta);

void si_consolidate(SiState& state, const Vec& params_at_task_end);

// penalty = c sum Omega (theta - anchor)^2 (no 1/2 factor), gradient
// 2c Omega (theta - anchor)
std::pair<double, Vec> si_penalty_and_grad(const Vec& params, const SiState& state);

// --- regenerative regularization toward the initialization ---

struct L2InitState {
    double alpha = 0.0;
    Vec theta0;
};

std::pair<double, Vec> l2init_penalty_and_grad(const Vec& params, const L2InitState& state);

// --- shrink and perturb ---

struct ShrinkPerturbConfig {
    double shrink = 0.0;
    double perturb = 0.0;
    Vec w0;  // snapshot of the randomly initialized parameters
};

// w <- (1 - shrink) w + perturb w0, applied at task boundaries
void shrink_perturb_apply(const std::vector<ParamRef>& params, const ShrinkPerturbConfig& cfg);

// --- continual backpropagation ---

struct CbpLayerState {
    Vec utilities;
    std::vector<std::int64_t> ages;
    double replace_accum = 0.0;
    Vec frozen_out_weight;  // |outgoing| sums into the frozen expansion, when that is the consumer
};

struct CbpState {
    double decay = 0.99;
    double replacement_rate = 1e-4;
    int maturity_threshold = 100;
    std::vector<CbpLayerState> layers;  // one per pre-layer
};

CbpState make_cbp_state(const FlyModel& model, double decay, double replacement_rate, int maturity_threshold);

// Updates per-neuron utilities u <- decay*u + (1-decay)*|h|*sum|w_out| from
// the batch trace, then reinitializes the lowest-utility mature neurons at
// the expected replacement rate: incoming weights redrawn from the init
// distribution, trainable outgoing weights zeroed, age and utility reset.
void cbp_step(FlyModel& model, const BatchTrace& trace, CbpState& state, Rng& rng);

// --- harness-facing learner wrapper ---

struct LearnerSpec {
    Strategy kind = Strategy::Sgd;
    double lambda = 0.0;         // EWC
    double c = 0.0;              // SI
    double xi = 1e-3;            // SI damping
    double alpha = 0.0;          // L2 Init
    double shrink = 0.0;         // S&P
    double perturb = 0.0;        // S&P
    double cbp_rate = 1e-4;      // CBP
    double cbp_decay = 0.99;     // CBP
    int cbp_maturity = 100;      // CBP
};

class Learner {
  public:
    virtual ~Learner() = default;
    virtual Strategy kind() const = 0;

    // Adds the regularizer gradient into grads; returns the penalty value.
    virtual double add_penalty_grad(FlyModel&, GradientSet&) { return 0.0; }

    // One descent step at the given rate. The default is plain SGD; SI
    // fuses its path-integral accumulation with the update so it sees the
    // realized parameter deltas.
    virtual void apply_step(FlyModel& model, GradientSet& grads, double lr);

    // Post-update maintenance with this step's trace (CBP reinits).
    virtual void after_step(FlyModel&, const BatchTrace&) {}

    // Task-boundary hook: consolidation or perturbation.
    virtual void on_task_end(FlyModel&, const Dataset& /*train*/, const std::vector<std::uint8_t>& /*allowed*/) {}

    virtual void save(BinWriter& w) const = 0;
};

std::unique_ptr<Learner> make_learner(const LearnerSpec& spec, FlyModel& model, std::uint64_t seed);

// Reads a learner back from a LRNR payload written by Learner::save.
std::unique_ptr<Learner> load_learner(BinReader& r, FlyModel& model);

}  // namespace flycl
