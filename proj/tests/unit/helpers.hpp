#pragma once

#include <random>
#include <vector>

#include "fhmm/model.hpp"

namespace fhmm::testing {

inline ApplianceHmm two_state(double off, double on, double stay_off = 0.9,
                              double stay_on = 0.8) {
  ApplianceHmm a;
  a.power_levels = Eigen::Vector2d(off, on);
  a.transition.resize(2, 2);
  a.transition << stay_off, 1.0 - stay_off, 1.0 - stay_on, stay_on;
  return a;
}

inline FhmmModel small_model(int num_appliances = 2, double sigma = 10.0) {
  std::vector<ApplianceHmm> apps;
  for (int i = 0; i < num_appliances; ++i)
    apps.push_back(two_state(0.0, 100.0 + 150.0 * i));
  return make_model(std::move(apps), sigma, sigma);
}

// Random instance generator for oracle-style tests; independent of the
// synthetic-benchmark generator shipped in the library.
inline FhmmModel random_small_model(std::mt19937_64& rng, int num_appliances,
                                    int num_states) {
  std::uniform_real_distribution<double> level(50.0, 1000.0);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::vector<ApplianceHmm> apps;
  for (int i = 0; i < num_appliances; ++i) {
    ApplianceHmm a;
    a.power_levels.resize(num_states);
    a.power_levels(0) = 0.0;
    for (int s = 1; s < num_states; ++s) a.power_levels(s) = level(rng);
    a.transition.resize(num_states, num_states);
    for (int r = 0; r < num_states; ++r) {
      double sum = 0.0;
      for (int c = 0; c < num_states; ++c) {
        a.transition(r, c) = unif(rng);
        sum += a.transition(r, c);
      }
      a.transition.row(r) /= sum;
    }
    apps.push_back(std::move(a));
  }
  std::uniform_real_distribution<double> sig(5.0, 40.0);
  const double s = sig(rng);
  return make_model(std::move(apps), s, s);
}

inline StateSequence random_states(std::mt19937_64& rng, const FhmmModel& model,
                                   int horizon) {
  StateSequence st;
  st.assignments.resize(horizon, model.num_appliances());
  for (int t = 0; t < horizon; ++t)
    for (int i = 0; i < model.num_appliances(); ++i) {
      std::uniform_int_distribution<int> pick(0, model.num_states(i) - 1);
      st.assignments(t, i) = pick(rng);
    }
  return st;
}

}  // namespace fhmm::testing
