#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "flycl/harness.hpp"

namespace flycl::acceptance {

struct CriterionResult {
    std::string id;
    std::string name;
    bool evaluated = false;  // required inputs were available
    bool pass = false;
    std::string detail;
};

// Per-seed ledgers of one experiment configuration.
struct Group {
    std::vector<MetricsLedger> ledgers;
};

// --- pinned experiment configurations ---

ExperimentConfig odor_base_config(Strategy kind, bool fly);
ExperimentConfig coding_sweep_base();     // sgd + expansion, scratch baselines on
ExperimentConfig expansion_sweep_base();  // sgd + expansion, head snapshots on
ExperimentConfig streaming_config(Strategy kind, bool fly);
ExperimentConfig imbalance_config(Strategy kind, bool fly, double gamma, ImbalanceOrder order);

inline const std::vector<double> kCodingLevels = {0.001, 0.005, 0.01, 0.05, 0.1, 0.3, 0.5};
inline const std::vector<double> kExpansionRatios = {5, 10, 20, 40};
inline const std::vector<double> kImbalanceGammas = {2, 10};
inline const std::vector<ImbalanceOrder> kImbalanceOrders = {ImbalanceOrder::Normal, ImbalanceOrder::Reverse,
                                                             ImbalanceOrder::Random};
inline const std::vector<Strategy> kImbalanceStrategies = {Strategy::Sgd, Strategy::Ewc, Strategy::Si};

// --- criterion checks (ids C1..C10) ---

CriterionResult check_odor_cil(const Group& sgd_fly, const Group& si_fly, const Group& sgd_abl,
                               const Group& si_abl, double runtime_s);
CriterionResult check_coding_sweep(const std::map<double, Group>& by_k);
CriterionResult check_expansion_sweep(const std::map<double, Group>& by_ratio);
CriterionResult check_birthday_combinatorics();
CriterionResult check_angle_distribution();
CriterionResult check_flops_accounting();
CriterionResult check_streaming_plasticity(const Group& ewc_fly, const Group& si_fly, const Group& ewc_abl,
                                           const Group& si_abl, double runtime_s);
CriterionResult check_property_suite();

struct ImbalanceCell {
    Group fly;
    Group ablated;
};
using ImbalanceKey = std::tuple<double, ImbalanceOrder, Strategy>;
CriterionResult check_imbalance(const std::map<ImbalanceKey, ImbalanceCell>& cells);

CriterionResult check_mvt_identity();

// --- group statistics helpers ---

double mean_final_avg_acc(const Group& g);
double mean_final_bwt(const Group& g);
double mean_final_fwt(const Group& g);
double mean_online_over_tasks(const Group& g, int first_task, int last_task);  // 1-based, inclusive
double mean_final_dormant_pre(const Group& g);
double mean_final_stable_rank(const Group& g);
double mean_final_weight_mag(const Group& g);
double mean_final_head_weight_mag(const Group& g);
double mean_extra(const Group& g, const std::string& name);

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace flycl::acceptance
