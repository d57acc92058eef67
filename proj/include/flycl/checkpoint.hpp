#pragma once

#include <filesystem>
#include <memory>

#include "flycl/fly_model.hpp"
#include "flycl/learners.hpp"

namespace flycl {

// FLYM container: magic, u16 version, config block, then the 64-bit float
// parameter arrays in declared order (pre-layers first, then head). The
// frozen projection is reconstructed from its seed. Optional tagged
// sections follow the model payload; "LRNR" carries learner state.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_model(const std::filesystem::path& path, const FlyModel& model);
FlyModel load_model(const std::filesystem::path& path);

void save_experiment(const std::filesystem::path& path, const FlyModel& model, const Learner& learner);

struct ExperimentCheckpoint {
    FlyModel model;
    std::unique_ptr<Learner> learner;  // null when no LRNR section is present
};

ExperimentCheckpoint load_experiment(const std::filesystem::path& path);

}  // namespace flycl
