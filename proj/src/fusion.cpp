#include "hytrack/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "hytrack/errors.hpp"

namespace hytrack {

const char* source_name(Source s) { return s == Source::PMBM ? "PMBM" : "TBD"; }

std::vector<FusedEstimate> fuse(const std::vector<TrackEstimate>& pmbm_est,
                                const std::vector<TrackEstimate>& tbd_est, long k,
                                const std::vector<double>* tbd_rates) {
  if (tbd_rates && tbd_rates->size() != tbd_est.size())
    throw InvalidInput("fuse: rate list does not match TBD estimates");
  std::vector<FusedEstimate> a, b;
  for (const auto& e : pmbm_est) a.push_back({k, kPmbmLabelBase + e.label, e.mean, Source::PMBM, e.r, 0.0});
  for (std::size_t i = 0; i < tbd_est.size(); ++i) {
    const auto& e = tbd_est[i];
    b.push_back({k, kTbdLabelBase + e.label, e.mean, Source::TBD, e.r, tbd_rates ? (*tbd_rates)[i] : 0.0});
  }
  auto by_label = [](const FusedEstimate& x, const FusedEstimate& y) { return x.label < y.label; };
  std::stable_sort(a.begin(), a.end(), by_label);
  std::stable_sort(b.begin(), b.end(), by_label);
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<ProximityWarning> proximity_warnings(const std::vector<FusedEstimate>& fused,
                                                 double epsilon) {
  std::vector<ProximityWarning> out;
  for (const auto& p : fused) {
    if (p.source != Source::PMBM) continue;
    for (const auto& t : fused) {
      if (t.source != Source::TBD) continue;
      const double d = std::hypot(p.state(0) - t.state(0), p.state(2) - t.state(2));
      if (d < epsilon) out.push_back({p.label, t.label, d});
    }
  }
  return out;
}

}  // namespace hytrack
