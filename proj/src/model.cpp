#include "dpf/model.hpp"

#include <algorithm>
#include <unordered_set>

namespace dpf {

FilteringModel::FilteringModel(std::shared_ptr<PriorComponent> prior,
                               std::shared_ptr<DynamicComponent> dynamic,
                               std::shared_ptr<ObservationComponent> observation,
                               std::shared_ptr<InitialProposalComponent> initial_proposal,
                               std::shared_ptr<ProposalComponent> proposal)
    : prior_(std::move(prior)),
      dynamic_(std::move(dynamic)),
      observation_(std::move(observation)),
      initial_proposal_(std::move(initial_proposal)),
      proposal_(std::move(proposal)) {
  if (!prior_ || !dynamic_ || !observation_)
    throw ContractError("FilteringModel requires prior, dynamic and observation components");
  std::unordered_set<const Parameter*> seen;
  std::unordered_set<std::string> names;
  auto collect = [&](const std::vector<ParameterPtr>& ps) {
    for (const ParameterPtr& p : ps) {
      if (!seen.insert(p.get()).second) continue;  // shared across components
      if (!names.insert(p->name()).second)
        throw ContractError("parameter '" + p->name() + "' registered twice");
      parameters_.push_back(p);
    }
  };
  collect(prior_->parameters());
  collect(dynamic_->parameters());
  collect(observation_->parameters());
  if (initial_proposal_) collect(initial_proposal_->parameters());
  if (proposal_) collect(proposal_->parameters());
}

ParameterPtr FilteringModel::parameter(const std::string& name) const {
  const auto it = std::find_if(parameters_.begin(), parameters_.end(),
                               [&](const ParameterPtr& p) { return p->name() == name; });
  if (it == parameters_.end()) throw ContractError("no parameter named '" + name + "'");
  return *it;
}

void FilteringModel::update() {
  for (const ParameterPtr& p : parameters_) p->update();
}

void FilteringModel::attach(Tape& tape) {
  for (const ParameterPtr& p : parameters_) p->bind(tape);
}

void FilteringModel::detach() {
  for (const ParameterPtr& p : parameters_) p->unbind();
}

}  // namespace dpf
