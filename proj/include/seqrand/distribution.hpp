#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seqrand/error.hpp"
#include "seqrand/qcore.hpp"

namespace seqrand {

// Conditional table p(o_0, ..., o_{n-1} | s_0, ..., s_{n-1}) for n parties.
// Party 0 is Alice in the sequential scenarios; parties 1..n are the Bob
// rounds in time order.
class JointDistribution {
 public:
  JointDistribution() = default;

  JointDistribution(std::vector<std::size_t> settings, std::vector<std::size_t> outcomes)
      : settings_(std::move(settings)), outcomes_(std::move(outcomes)) {
    if (settings_.size() != outcomes_.size() || settings_.empty())
      throw Error(ErrorCode::ShapeMismatch, "settings and outcomes must list the same parties");
    for (std::size_t p = 0; p < settings_.size(); ++p)
      if (settings_[p] == 0 || outcomes_[p] == 0)
        throw Error(ErrorCode::ShapeMismatch, "every party needs at least one setting and outcome");
    slice_size_ = product(outcomes_);
    table_.assign(product(settings_) * slice_size_, 0.0);
  }

  std::size_t parties() const { return settings_.size(); }
  std::size_t settings(std::size_t party) const { return settings_.at(party); }
  std::size_t outcomes(std::size_t party) const { return outcomes_.at(party); }
  const std::vector<std::size_t>& settings_shape() const { return settings_; }
  const std::vector<std::size_t>& outcomes_shape() const { return outcomes_; }
  std::size_t setting_tuples() const { return table_.size() / slice_size_; }
  std::size_t outcome_tuples() const { return slice_size_; }

  double operator()(std::span<const std::size_t> s, std::span<const std::size_t> o) const {
    return table_[offset(s, o)];
  }
  double& operator()(std::span<const std::size_t> s, std::span<const std::size_t> o) {
    return table_[offset(s, o)];
  }
  double at(std::initializer_list<std::size_t> s, std::initializer_list<std::size_t> o) const {
    return (*this)(std::span<const std::size_t>(s.begin(), s.size()),
                   std::span<const std::size_t>(o.begin(), o.size()));
  }
  double& at(std::initializer_list<std::size_t> s, std::initializer_list<std::size_t> o) {
    return (*this)(std::span<const std::size_t>(s.begin(), s.size()),
                   std::span<const std::size_t>(o.begin(), o.size()));
  }

  // Flat access: setting tuple index (row-major over settings_) and outcome
  // tuple index (row-major over outcomes_).
  double flat(std::size_t setting_tuple, std::size_t outcome_tuple) const {
    return table_[setting_tuple * slice_size_ + outcome_tuple];
  }
  double& flat(std::size_t setting_tuple, std::size_t outcome_tuple) {
    return table_[setting_tuple * slice_size_ + outcome_tuple];
  }

  std::vector<std::size_t> unflatten_settings(std::size_t t) const { return unflatten(t, settings_); }
  std::vector<std::size_t> unflatten_outcomes(std::size_t t) const { return unflatten(t, outcomes_); }

  // Keeps the listed parties (in the given order). Dropped parties have their
  // outcomes summed out and their settings averaged uniformly.
  JointDistribution marginal(std::span<const std::size_t> keep) const {
    std::vector<std::size_t> ks, ko;
    for (std::size_t p : keep) {
      if (p >= parties()) throw Error(ErrorCode::ShapeMismatch, "marginal party out of range");
      ks.push_back(settings_[p]);
      ko.push_back(outcomes_[p]);
    }
    JointDistribution out(ks, ko);
    double dropped_settings = 1.0;
    for (std::size_t p = 0; p < parties(); ++p)
      if (std::find(keep.begin(), keep.end(), p) == keep.end()) dropped_settings *= settings_[p];
    std::vector<std::size_t> sub_s(keep.size()), sub_o(keep.size());
    for (std::size_t st = 0; st < setting_tuples(); ++st) {
      const auto s = unflatten_settings(st);
      for (std::size_t k = 0; k < keep.size(); ++k) sub_s[k] = s[keep[k]];
      for (std::size_t ot = 0; ot < slice_size_; ++ot) {
        const auto o = unflatten_outcomes(ot);
        for (std::size_t k = 0; k < keep.size(); ++k) sub_o[k] = o[keep[k]];
        out(sub_s, sub_o) += flat(st, ot) / dropped_settings;
      }
    }
    return out;
  }

  JointDistribution marginal(std::initializer_list<std::size_t> keep) const {
    return marginal(std::span<const std::size_t>(keep.begin(), keep.size()));
  }

  // Largest deviation of a conditional slice sum from one.
  double normalization_defect() const {
    double worst = 0.0;
    for (std::size_t st = 0; st < setting_tuples(); ++st) {
      double sum = 0.0;
      for (std::size_t ot = 0; ot < slice_size_; ++ot) sum += flat(st, ot);
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
  }

  void validate(const Tolerances& tol = default_tolerances()) const {
    for (double v : table_)
      if (!(v >= -tol.num && v <= 1.0 + tol.num))
        throw Error(ErrorCode::ShapeMismatch, "probability entry " + std::to_string(v) + " outside [0,1]");
    if (normalization_defect() > tol.norm)
      throw Error(ErrorCode::NotComplete,
                  "conditional slice sums deviate from 1 by " + std::to_string(normalization_defect()));
  }

  const std::vector<double>& values() const { return table_; }

 private:
  static std::vector<std::size_t> unflatten(std::size_t t, const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> digits(shape.size());
    for (std::size_t k = shape.size(); k-- > 0;) {
      digits[k] = t % shape[k];
      t /= shape[k];
    }
    return digits;
  }

  std::size_t offset(std::span<const std::size_t> s, std::span<const std::size_t> o) const {
    if (s.size() != parties() || o.size() != parties())
      throw Error(ErrorCode::ShapeMismatch, "index tuple has wrong number of parties");
    std::size_t st = 0, ot = 0;
    for (std::size_t p = 0; p < parties(); ++p) {
      if (s[p] >= settings_[p] || o[p] >= outcomes_[p])
        throw Error(ErrorCode::ShapeMismatch, "setting or outcome index out of range");
      st = st * settings_[p] + s[p];
      ot = ot * outcomes_[p] + o[p];
    }
    return st * slice_size_ + ot;
  }

  std::vector<std::size_t> settings_;
  std::vector<std::size_t> outcomes_;
  std::size_t slice_size_ = 0;
  std::vector<double> table_;
};

}  // namespace seqrand
