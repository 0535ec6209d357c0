#ifndef DPF_MODEL_HPP
#define DPF_MODEL_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpf/constraints.hpp"
#include "dpf/random.hpp"
#include "dpf/tape.hpp"

namespace dpf {

/// A named learnable tensor. Constraints are out-of-tape projections applied
/// by update() after optimiser steps; gradient does not flow through them.
/// For the duration of one filter run a parameter can be bound to that run's
/// tape, in which case tensor() returns the (single) leaf so that gradients
/// accumulate on one node.
class Parameter {
 public:
  using Constraint = std::function<Tensor(const Tensor&)>;

  Parameter(std::string name, Tensor value, Constraint constraint = nullptr)
      : name_(std::move(name)), value_(std::move(value)), constraint_(std::move(constraint)) {
    apply_constraint();
  }

  const std::string& name() const { return name_; }
  const Shape& shape() const { return value_.shape; }
  const Array& value() const { return value_.data; }
  std::uint64_t version() const { return version_; }

  void set_value(Array v) {
    if (v.size() != value_.numel())
      throw ContractError("parameter " + name_ + ": size mismatch on assignment");
    value_.data = std::move(v);
    ++version_;
  }

  /// Re-applies the constraint; called from FilteringModel::update().
  void update() {
    apply_constraint();
    ++version_;
  }

  void bind(Tape& tape) {
    bound_ = tape.leaf(value_.data, value_.shape);
    bound_tape_id_ = tape.id();
  }
  void unbind() {
    bound_.reset();
    bound_tape_id_ = 0;
  }

  /// Bound leaf when attached to a live tape, constant value otherwise.
  Tensor tensor() const {
    if (bound_ && bound_->tape != nullptr && bound_->tape->id() == bound_tape_id_)
      return *bound_;
    return value_;
  }

  /// Gradient from the bound tape after backward; zeros when untouched.
  Array grad() const {
    if (!bound_) return Array::Zero(value_.numel());
    return bound_->tape->grad(*bound_);
  }

 private:
  void apply_constraint() {
    if (constraint_) value_ = constraint_(value_);
  }

  std::string name_;
  Tensor value_;
  Constraint constraint_;
  std::uint64_t version_ = 0;
  std::optional<Tensor> bound_;
  std::uint64_t bound_tape_id_ = 0;
};

using ParameterPtr = std::shared_ptr<Parameter>;

/// Per-step side information. Absent dataset fields stay absent; components
/// must not assume zero-filled defaults.
struct Context {
  Index t = 0;
  std::optional<Tensor> time;
  std::optional<Tensor> prev_time;
  std::optional<Tensor> control;
  std::optional<Tensor> series_metadata;
};

class PriorComponent {
 public:
  virtual ~PriorComponent() = default;
  virtual Tensor sample(Index batch_size, Index n_particles, const Context& ctx) = 0;
  virtual bool has_log_density() const { return false; }
  virtual Tensor log_density(const Tensor& /*state*/, const Context& /*ctx*/) {
    throw CapabilityError("prior component does not implement log_density");
  }
  virtual std::vector<ParameterPtr> parameters() const { return {}; }
};

class DynamicComponent {
 public:
  virtual ~DynamicComponent() = default;
  virtual Tensor sample(const Tensor& prev_state, const Context& ctx) = 0;
  virtual bool has_log_density() const { return false; }
  virtual Tensor log_density(const Tensor& /*prev_state*/, const Tensor& /*state*/,
                             const Context& /*ctx*/) {
    throw CapabilityError("dynamic component does not implement log_density");
  }
  virtual std::vector<ParameterPtr> parameters() const { return {}; }
};

class ObservationComponent {
 public:
  virtual ~ObservationComponent() = default;
  /// Log score of the observation given each particle; need not be a
  /// normalised density.
  virtual Tensor score(const Tensor& state, const Tensor& observation, const Context& ctx) = 0;
  virtual bool has_sample() const { return false; }
  virtual Tensor sample(const Tensor& /*state*/, const Context& /*ctx*/) {
    throw CapabilityError("observation component does not implement sample");
  }
  virtual std::vector<ParameterPtr> parameters() const { return {}; }
};

class InitialProposalComponent {
 public:
  virtual ~InitialProposalComponent() = default;
  virtual Tensor sample(Index batch_size, Index n_particles, const Tensor& observation,
                        const Context& ctx) = 0;
  virtual Tensor log_density(const Tensor& state, const Tensor& observation,
                             const Context& ctx) = 0;
  virtual std::vector<ParameterPtr> parameters() const { return {}; }
};

class ProposalComponent {
 public:
  virtual ~ProposalComponent() = default;
  virtual Tensor sample(const Tensor& prev_state, const Tensor& observation,
                        const Context& ctx) = 0;
  virtual Tensor log_density(const Tensor& prev_state, const Tensor& state,
                             const Tensor& observation, const Context& ctx) = 0;
  virtual std::vector<ParameterPtr> parameters() const { return {}; }
};

/// Bundle of model components. A missing initial proposal defaults to the
/// prior and a missing proposal to the dynamic kernel (the bootstrap filter).
class FilteringModel {
 public:
  FilteringModel(std::shared_ptr<PriorComponent> prior,
                 std::shared_ptr<DynamicComponent> dynamic,
                 std::shared_ptr<ObservationComponent> observation,
                 std::shared_ptr<InitialProposalComponent> initial_proposal = nullptr,
                 std::shared_ptr<ProposalComponent> proposal = nullptr);

  PriorComponent& prior() { return *prior_; }
  DynamicComponent& dynamic() { return *dynamic_; }
  ObservationComponent& observation() { return *observation_; }
  InitialProposalComponent* initial_proposal() { return initial_proposal_.get(); }
  ProposalComponent* proposal() { return proposal_.get(); }
  bool is_bootstrap() const { return proposal_ == nullptr; }

  const std::vector<ParameterPtr>& parameters() const { return parameters_; }
  ParameterPtr parameter(const std::string& name) const;

  /// Re-applies constraints and invalidates caches; call after any change to
  /// parameter values (e.g. an optimiser step).
  void update();

  /// Binds every parameter as a leaf of the run's tape.
  void attach(Tape& tape);
  void detach();

 private:
  std::shared_ptr<PriorComponent> prior_;
  std::shared_ptr<DynamicComponent> dynamic_;
  std::shared_ptr<ObservationComponent> observation_;
  std::shared_ptr<InitialProposalComponent> initial_proposal_;
  std::shared_ptr<ProposalComponent> proposal_;
  std::vector<ParameterPtr> parameters_;
};

/// RAII tape attachment for the span of one filter run.
class ModelAttachment {
 public:
  ModelAttachment(FilteringModel& model, Tape* tape) : model_(model) {
    if (tape != nullptr) model_.attach(*tape);
    else model_.detach();
  }
  ~ModelAttachment() { model_.detach(); }
  ModelAttachment(const ModelAttachment&) = delete;
  ModelAttachment& operator=(const ModelAttachment&) = delete;

 private:
  FilteringModel& model_;
};

}  // namespace dpf

#endif
