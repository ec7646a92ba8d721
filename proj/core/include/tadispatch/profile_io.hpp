#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tadispatch/profile.hpp"

namespace tad {

// One timed transfer observation, used for alpha/beta fitting.
struct TransferSample {
  int src = 0;
  int dst = 0;
  double message_mb = 0.0;
  double time_us = 0.0;
};

// CSV with header src,dst,alpha_us,beta_us_per_mb; one row per measured
// ordered pair. Missing pairs are completed by fill_partial_profile.
LinkProfile load_profile_csv(std::istream& in, int device_count, const Topology* topo,
                             double self_beta_floor = kDefaultSelfBetaFloor);
LinkProfile load_profile_file(const std::string& path, int device_count, const Topology* topo,
                              double self_beta_floor = kDefaultSelfBetaFloor);

void save_profile_csv(std::ostream& out, const Matrix& alpha, const Matrix& beta);
void save_profile_file(const std::string& path, const Matrix& alpha, const Matrix& beta);

// CSV with header src,dst,message_mb,time_us.
std::vector<TransferSample> load_samples_csv(std::istream& in);
std::vector<TransferSample> load_samples_file(const std::string& path);

}  // namespace tad
