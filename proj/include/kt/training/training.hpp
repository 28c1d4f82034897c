#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kt/data/dataset.hpp"
#include "kt/evaluation/metrics.hpp"
#include "kt/model/engine.hpp"
#include "kt/model/parameters.hpp"

namespace kt {

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 20;
    std::size_t patience = 5;
    double clip_norm = 5.0;  // <= 0 disables clipping
    std::uint64_t seed = 1;
    /// Stop after the epoch during which this many seconds elapsed (0 = no limit).
    double max_seconds = 0;

    void validate() const;
};

/// Uniform Xavier initialisation. Biases are 0 except the LSTM forget gates (1).
template <typename Real>
Parameters<Real> xavier_init(const ModelConfig& config, std::uint64_t seed);

/// Cross-entropy with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(double p, double label);

template <typename Real>
struct AdamState {
    Parameters<Real> m;
    Parameters<Real> v;
    std::uint64_t step = 0;

    explicit AdamState(const ModelConfig& config) : m(config), v(config) {}
};

/// Raised when a gradient contains NaN or infinity.
class NonFiniteGradient : public std::runtime_error {
public:
    explicit NonFiniteGradient(const std::string& tensor)
        : std::runtime_error("non-finite gradient in tensor '" + tensor + "'"), tensor_(tensor) {}
    const std::string& tensor() const { return tensor_; }

private:
    std::string tensor_;
};

template <typename Real>
void adam_step(Parameters<Real>& params, const Parameters<Real>& grads, AdamState<Real>& state,
               const TrainConfig& config);

/// Rescales grads so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <typename Real>
double clip_global_norm(Parameters<Real>& grads, double max_norm);

// ---------------------------------------------------------------- inference

/// Runs the model over `examples`, grouping prefixes of similar length into
/// batches. `visit(engine, b, i)` is called for batch row b holding example i.
/// Example results do not depend on batch composition.
template <typename Real>
void for_each_prediction(const Parameters<Real>& params, const std::vector<std::vector<Step>>& encoded,
                         std::span<const ExampleRef> examples, std::size_t batch_size,
                         const std::function<void(const Engine<Real>&, std::size_t, std::size_t)>& visit);

/// Probability for every example, in example order.
template <typename Real>
std::vector<double> predict_examples(const Parameters<Real>& params,
                                     const std::vector<std::vector<Step>>& encoded,
                                     std::span<const ExampleRef> examples, std::size_t batch_size = 256);

std::vector<std::uint8_t> example_labels(const std::vector<std::vector<Step>>& encoded,
                                         std::span<const ExampleRef> examples);

// ---------------------------------------------------------------- checkpoints

struct TrainingInfo {
    std::size_t epoch = 0;  // epoch the parameters come from (1-based, 0 = untrained)
    double val_auc = 0, val_acc = 0, val_f1 = 0;
    std::uint64_t seed = 0;
    double base_rate = 0.5;  // cold-start prior p0
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
    std::uint64_t split_seed = 0;
};

struct Checkpoint {
    Parameters<float> params;
    std::vector<std::string> question_ids;  // dense index order
    TagTable tags;
    TrainingInfo info;

    Catalog catalog() const { return Catalog(question_ids, tags); }
    bool operator==(const Checkpoint& other) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { io, bad_magic, version, truncated, metadata, unknown_tensor, missing_tensor, shape };
    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------- training loop

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0;
    double val_auc = 0, val_acc = 0, val_f1 = 0;
    double seconds = 0;
};

/// Tab-separated `epoch loss val_auc val_acc val_f1`.
void write_epoch_log(std::ostream& out, const std::vector<EpochRecord>& log);

enum class StopReason { max_epochs, patience, time_limit, diverged, callback };

struct FitResult {
    Checkpoint best;
    std::vector<EpochRecord> log;
    StopReason reason = StopReason::max_epochs;
};

/// Called after each epoch with the record and current parameters; return
/// false to stop.
using EpochCallback = std::function<bool(const EpochRecord&, const Parameters<float>&)>;

/// Trains on every (user, t >= 2) prediction of `train`, keeps the parameters
/// with the best validation AUC. Question indices come from `catalog`.
FitResult fit(const std::vector<UserSequence>& train, const std::vector<UserSequence>& validation,
              const Catalog& catalog, ModelConfig model, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

std::string to_string(StopReason reason);

}  // namespace kt
