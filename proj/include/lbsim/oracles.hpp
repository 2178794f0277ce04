#pragma once

#include <memory>

#include "lbsim/audit.hpp"
#include "lbsim/policies.hpp"

namespace lbsim {

/// Exact laws for the catalog policies, derived from their definitions rather
/// than from the hook code. Throws ConfigError for policies without one.
std::shared_ptr<const DistributionOracle> exact_oracle(const PolicyPtr& policy);

/// Relabels an idle bitmap: bit sigma(i)-1 of the image equals bit i-1.
MemoryState permute_bitmap(const Permutation& sigma, const MemoryState& m);

/// Maps every stored server id through sigma, keeping lengths and slot order.
MemoryState relabel_slots(const SqdbPolicy& policy, const Permutation& sigma, const MemoryState& m);
/// Every canonical slot list; throws ConfigError past `limit` states.
std::vector<MemoryState> slot_states(const SqdbPolicy& policy, std::size_t limit);

/// Audit subject with the default grids, a size grid spanning every interval
/// for size-aware policies, and the bitmap or slot relabeling for memory-carrying policies.
AuditSubject audit_subject(const PolicyPtr& policy);

}  // namespace lbsim
