#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "caselink/gcg.hpp"
#include "caselink/gnn.hpp"
#include "caselink/objective.hpp"

namespace caselink {

struct AdamConfig {
    double lr = 1e-3;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct FeatureConfig {
    std::size_t dim = 128;
    std::uint64_t seed = 1;
};

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    AdamConfig adam;
    std::uint64_t seed = 7;
    /// Intermediate checkpoint/report period in epochs; 0 disables.
    std::size_t eval_every = 0;
    FeatureConfig features;
    GcgConfig gcg;
    GnnConfig gnn;
    LossConfig loss;

    void validate() const;
};

struct ConfigKey {
    const char* name;
    const char* default_value;
    const char* help;
};

/// Flat `key = value` configuration with dotted names. Every key has a
/// default; unknown keys are rejected.
class RunConfig {
  public:
    RunConfig();

    static const std::vector<ConfigKey>& keys();
    /// Reads `key = value` lines (`#` starts a comment) over the defaults.
    static RunConfig load(const std::filesystem::path& path);
    static RunConfig from_train_config(const TrainConfig& config);
    static RunConfig from_map(const std::map<std::string, std::string>& values);

    void set(const std::string& key, const std::string& value);
    /// Parses `key=value`.
    void set_assignment(const std::string& assignment);
    [[nodiscard]] const std::string& get(const std::string& key) const;
    [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

    [[nodiscard]] TrainConfig to_train_config() const;
    /// Hyperparameter keys only (no `data.*` paths).
    [[nodiscard]] std::map<std::string, std::string> hyperparameters() const;

    /// `data.*` path resolved against the directory of the loaded file.
    [[nodiscard]] std::filesystem::path data_path(const std::string& key) const;
    [[nodiscard]] const std::filesystem::path& base_dir() const { return base_dir_; }

  private:
    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

}  // namespace caselink
