#pragma once

#include "toda/rational.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace toda {

struct Puncture {
  std::string label;
  std::optional<std::array<Rational, 2>> position;
  RationalVector mu;
};

/// Singular strengths mu_k(p) of an n-component system on a genus-g surface.
///
/// Only punctures carry data: every listed puncture must have at least one
/// nonzero strength. The smooth case (no punctures) is not representable here;
/// see smooth_criterion().
class SingularStrengths {
 public:
  SingularStrengths(int n, int genus, std::vector<Puncture> punctures)
      : n_(n), genus_(genus), punctures_(std::move(punctures)) {
    if (n_ < 1) throw InvalidInput("system size n must be >= 1");
    if (genus_ < 0) throw InvalidInput("genus must be >= 0");
    if (punctures_.empty()) {
      throw InvalidInput("no punctures given; use the smooth-case entry point");
    }
    for (std::size_t i = 0; i < punctures_.size(); ++i) {
      auto& p = punctures_[i];
      if (p.label.empty()) p.label = "p" + std::to_string(i);
      if (p.mu.size() != static_cast<std::size_t>(n_)) {
        throw InvalidInput("puncture '" + p.label + "': mu has " + std::to_string(p.mu.size()) +
                           " entries, expected " + std::to_string(n_));
      }
      bool any = false;
      for (const auto& m : p.mu) any = any || (m != 0);
      if (!any) throw InvalidInput("puncture '" + p.label + "' has all-zero strengths");
    }
  }

  int n() const { return n_; }
  int genus() const { return genus_; }
  const std::vector<Puncture>& punctures() const { return punctures_; }

  /// s_j = sum over punctures of mu_j(p).
  RationalVector column_sums() const {
    RationalVector s(static_cast<std::size_t>(n_), Rational(0));
    for (const auto& p : punctures_) {
      for (int j = 0; j < n_; ++j) s[j] += p.mu[j];
    }
    return s;
  }

  /// Extra requirements for data fed to the torus solver.
  void require_solver_ready() const {
    if (genus_ != 1) throw InvalidInput("the solver only handles genus 1 (flat torus)");
    for (const auto& p : punctures_) {
      if (!p.position) throw InvalidInput("puncture '" + p.label + "' has no position");
      for (const auto& m : p.mu) {
        // e^{u_k} ~ |z|^{2 mu} is integrable only for mu > -1.
        if (m <= -1) {
          throw InvalidInput("puncture '" + p.label + "': strength " + m.get_str() +
                             " <= -1 is not integrable");
        }
      }
    }
  }

 private:
  int n_;
  int genus_;
  std::vector<Puncture> punctures_;
};

}  // namespace toda
