#pragma once

#include <string>
#include <vector>

#include "hytrack/pmbm.hpp"
#include "hytrack/tbd.hpp"

namespace hytrack {

enum class Source { PMBM, TBD };

const char* source_name(Source s);

// Offsets keep labels from the two trackers apart.
constexpr long kPmbmLabelBase = 1000000;
constexpr long kTbdLabelBase = 2000000;

struct FusedEstimate {
  long k = 0;
  long label = 0;
  StateVec state = StateVec::Zero();
  Source source = Source::PMBM;
  double existence = 0.0;
  double lambda_hat = 0.0;  // TBD only
};

struct ProximityWarning {
  long pmbm_label = 0;
  long tbd_label = 0;
  double distance = 0.0;
};

// PMBM first then TBD, each ordered by label. tbd_rates, if given, is indexed
// like tbd_est.
std::vector<FusedEstimate> fuse(const std::vector<TrackEstimate>& pmbm_est,
                                const std::vector<TrackEstimate>& tbd_est, long k,
                                const std::vector<double>* tbd_rates = nullptr);

// Cross-source pairs closer than epsilon.
std::vector<ProximityWarning> proximity_warnings(const std::vector<FusedEstimate>& fused,
                                                 double epsilon);

}  // namespace hytrack
