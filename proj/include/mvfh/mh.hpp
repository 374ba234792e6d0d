#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mvfh/errors.hpp"
#include "mvfh/rng.hpp"

namespace mvfh {

// Proposal scale for a univariate random-walk Metropolis update: the walk runs
// on a transformed axis where the parameter is unconstrained.
enum class MhTransform { identity, log_scale, logit };

namespace detail {

inline double to_unconstrained(MhTransform t, double x) {
  switch (t) {
    case MhTransform::identity: return x;
    case MhTransform::log_scale: return std::log(x);
    case MhTransform::logit: return std::log(x / (1.0 - x));
  }
  return x;
}

inline double from_unconstrained(MhTransform t, double z) {
  switch (t) {
    case MhTransform::identity: return z;
    case MhTransform::log_scale: return std::exp(z);
    case MhTransform::logit: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

// log |dx/dz| expressed through the constrained value x.
inline double log_jacobian(MhTransform t, double x) {
  switch (t) {
    case MhTransform::identity: return 0.0;
    case MhTransform::log_scale: return std::log(x);
    case MhTransform::logit: return std::log(x) + std::log1p(-x);
  }
  return 0.0;
}

}  // namespace detail

// One scalar parameter updated by random-walk Metropolis. The target callback
// receives the constrained value and returns the log posterior kernel; the
// transform Jacobian is handled here. Proposal-scale adaptation (Robbins-Monro
// toward 0.44 acceptance) runs only while `adapt` is passed true — callers
// freeze it after burn-in so the sampling-phase kernel is fixed.
class RwMh {
 public:
  RwMh(std::string name, MhTransform transform, double init, double prop_sd)
      : name_(std::move(name)), transform_(transform), value_(init), prop_sd_(prop_sd) {
    if (!(prop_sd > 0.0)) throw ValidationError("RwMh " + name_ + ": proposal sd must be > 0");
    z_ = detail::to_unconstrained(transform_, value_);
    if (!std::isfinite(z_)) {
      throw ValidationError("RwMh " + name_ + ": initial value outside the transform domain");
    }
  }

  template <class F>
  bool step(F&& log_target, RngStream& rng, bool adapt) {
    const double lp_cur = log_target(value_) + detail::log_jacobian(transform_, value_);
    const double z_prop = z_ + prop_sd_ * rng.normal();
    const double x_prop = detail::from_unconstrained(transform_, z_prop);
    double lp_prop = -std::numeric_limits<double>::infinity();
    if (std::isfinite(x_prop) && in_domain(x_prop)) {
      lp_prop = log_target(x_prop) + detail::log_jacobian(transform_, x_prop);
    }
    if (!std::isfinite(lp_cur)) {
      throw NumericError("RwMh " + name_ + ": log target not finite at current state");
    }
    double log_alpha = lp_prop - lp_cur;
    double alpha = log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
    bool accept = rng.uniform() < alpha;
    if (accept) {
      z_ = z_prop;
      value_ = x_prop;
    }
    ++proposals_;
    accepts_ += accept ? 1 : 0;
    if (adapt) {
      ++adapt_steps_;
      const double gamma = 1.0 / std::pow(static_cast<double>(adapt_steps_), 0.6);
      double log_sd = std::log(prop_sd_) + gamma * (alpha - 0.44);
      prop_sd_ = std::min(std::max(std::exp(log_sd), 1e-6), 1e6);
    } else {
      ++sampling_proposals_;
      sampling_accepts_ += accept ? 1 : 0;
    }
    return accept;
  }

  const std::string& name() const { return name_; }
  double value() const { return value_; }
  void set_value(double v) {
    value_ = v;
    z_ = detail::to_unconstrained(transform_, v);
  }
  double proposal_sd() const { return prop_sd_; }
  // Sampling-phase acceptance rate when available, otherwise overall.
  double acceptance_rate() const {
    if (sampling_proposals_ > 0) {
      return static_cast<double>(sampling_accepts_) / sampling_proposals_;
    }
    return proposals_ > 0 ? static_cast<double>(accepts_) / proposals_ : 0.0;
  }

 private:
  bool in_domain(double x) const {
    switch (transform_) {
      case MhTransform::identity: return true;
      case MhTransform::log_scale: return x > 0.0;
      case MhTransform::logit: return x > 0.0 && x < 1.0;
    }
    return true;
  }

  std::string name_;
  MhTransform transform_;
  double value_;
  double z_;
  double prop_sd_;
  long proposals_ = 0;
  long accepts_ = 0;
  long sampling_proposals_ = 0;
  long sampling_accepts_ = 0;
  long adapt_steps_ = 0;
};

}  // namespace mvfh
