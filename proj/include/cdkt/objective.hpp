#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "cdkt/cascade.hpp"
#include "cdkt/latent_model.hpp"

namespace cdkt {

inline double hinge(double margin) noexcept { return std::max(0.0, 1.0 - margin); }

// Violation counts of the embedding constraints, strict inequalities, no margin.
// Threshold families are left at zero for CDK models.
struct ConstraintReport {
  std::size_t in_threshold_violations = 0;
  std::size_t out_threshold_violations = 0;
  std::size_t order_violations = 0;
  std::size_t in_threshold_total = 0;
  std::size_t out_threshold_total = 0;
  std::size_t order_total = 0;

  std::size_t violations() const noexcept {
    return in_threshold_violations + out_threshold_violations + order_violations;
  }

  ConstraintReport& operator+=(const ConstraintReport& o) noexcept {
    in_threshold_violations += o.in_threshold_violations;
    out_threshold_violations += o.out_threshold_violations;
    order_violations += o.order_violations;
    in_threshold_total += o.in_threshold_total;
    out_threshold_total += o.out_threshold_total;
    order_total += o.order_total;
    return *this;
  }
};

namespace detail {

// Squared distance from the source for every infected user, in infection order.
inline std::vector<double> source_distances(const LatentModel& model, const IndexedCascade& c) {
  std::vector<double> d(c.users.size());
  const auto zs = model.embedding(c.source);
  for (std::size_t p = 0; p < c.users.size(); ++p) d[p] = sq_distance(zs, model.embedding(c.users[p]));
  return d;
}

// Calls fn(p, q) for every infection-order position pair of non-source users
// with strictly increasing timestamps.
template <typename Fn>
void for_each_ordered_pair(const IndexedCascade& c, Fn&& fn) {
  const std::size_t n = c.users.size();
  for (std::size_t p = 0; p < n; ++p) {
    if (c.users[p] == c.source) continue;
    for (std::size_t q = p + 1; q < n; ++q) {
      if (c.users[q] == c.source || !(c.times[p] < c.times[q])) continue;
      fn(p, q);
    }
  }
}

template <typename Fn>
void for_each_non_member(const LatentModel& model, const IndexedCascade& c, Fn&& fn) {
  std::size_t next = 0;
  for (UserIndex u = 0; u < model.num_users(); ++u) {
    if (next < c.members.size() && c.members[next] == u) {
      ++next;
      continue;
    }
    fn(u);
  }
}

}  // namespace detail

inline ConstraintReport check_constraints(const LatentModel& model, const IndexedCascade& c) {
  ConstraintReport r;
  const auto d = detail::source_distances(model, c);
  detail::for_each_ordered_pair(c, [&](std::size_t p, std::size_t q) {
    ++r.order_total;
    if (d[p] >= d[q]) ++r.order_violations;
  });
  if (model.variant() == Variant::CDKT) {
    const double tau = model.tau();
    for (std::size_t p = 0; p < c.users.size(); ++p) {
      if (c.users[p] == c.source) continue;
      ++r.in_threshold_total;
      if (d[p] >= tau) ++r.in_threshold_violations;
    }
    const auto zs = model.embedding(c.source);
    detail::for_each_non_member(model, c, [&](UserIndex u) {
      ++r.out_threshold_total;
      if (sq_distance(zs, model.embedding(u)) <= tau) ++r.out_threshold_violations;
    });
  }
  return r;
}

inline ConstraintReport check_constraints(const LatentModel& model, const Cascade& c) {
  return check_constraints(model, index_cascade(model.users(), c));
}

// The three hinge families of the ranking objective for one cascade.
struct LossTerms {
  double inside = 0.0;   // infected users (source excluded) vs tau
  double outside = 0.0;  // non-infected users vs tau
  double order = 0.0;    // strictly ordered infected pairs
  std::size_t outside_count = 0;

  double sum() const noexcept { return inside + outside + order; }
};

inline LossTerms cascade_loss_terms(const LatentModel& model, const IndexedCascade& c,
                                    std::optional<std::span<const UserIndex>> negatives = std::nullopt) {
  LossTerms t;
  const auto d = detail::source_distances(model, c);
  detail::for_each_ordered_pair(c, [&](std::size_t p, std::size_t q) { t.order += hinge(d[q] - d[p]); });
  if (model.variant() != Variant::CDKT) return t;

  const double tau = model.tau();
  for (std::size_t p = 0; p < c.users.size(); ++p)
    if (c.users[p] != c.source) t.inside += hinge(tau - d[p]);

  const auto zs = model.embedding(c.source);
  auto add_outside = [&](UserIndex u) {
    t.outside += hinge(sq_distance(zs, model.embedding(u)) - tau);
    ++t.outside_count;
  };
  if (negatives) {
    for (UserIndex u : *negatives) add_outside(u);
  } else {
    detail::for_each_non_member(model, c, add_outside);
  }
  return t;
}

// Hinge ranking loss of one cascade. Without `negatives` the full complement
// of the infected set is used.
inline double cascade_loss(const LatentModel& model, const Cascade& c,
                           std::optional<std::span<const UserIndex>> negatives = std::nullopt) {
  return cascade_loss_terms(model, index_cascade(model.users(), c), negatives).sum();
}

inline double total_loss(const LatentModel& model, std::span<const Cascade> train) {
  double sum = 0.0;
  for (const auto& c : train) sum += cascade_loss(model, c);
  return sum;
}

}  // namespace cdkt
