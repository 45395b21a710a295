#include "qpi/metrics.hpp"

#include <charconv>
#include <sstream>

namespace qpi {

MetricsReport report(const IntervalSet& iv, const Vector& y, const Mask& mask, double alpha) {
  MetricsReport r;
  r.alpha = alpha;
  r.n_eval = mask_count(mask);
  r.picp = picp(iv, y, mask);
  r.mpiw = mpiw(iv, mask);
  r.nmpiw = nmpiw(iv, y, mask);
  r.mpe = mpe(iv, y, mask);
  r.sharpness = sharpness(iv, mask);
  r.winkler = winkler(iv, y, mask, alpha);
  r.cwc = cwc(r.nmpiw, r.picp, alpha);
  return r;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv_header() {
  return "run_id,dataset,model,lambda,seed,picp,mpiw,nmpiw,mpe,sharpness,winkler,cwc";
}

std::string metrics_csv_row(const RunLabel& label, const MetricsReport& r) {
  std::ostringstream os;
  os << label.run_id << ',' << label.dataset << ',' << label.model << ',' << format_double(label.lambda) << ','
     << label.seed;
  for (double v : {r.picp, r.mpiw, r.nmpiw, r.mpe, r.sharpness, r.winkler, r.cwc}) os << ',' << format_double(v);
  return os.str();
}

}  // namespace qpi
