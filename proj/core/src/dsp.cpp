#include "nsd/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nsd/error.hpp"

namespace nsd::dsp {

namespace {

using cplx = std::complex<double>;

struct Zpk {
  std::vector<cplx> zeros;
  std::vector<cplx> poles;
  double gain = 1.0;
};

// Analog Chebyshev type-II lowpass prototype with the stopband edge at 1 rad/s.
Zpk cheby2_prototype(int n, double stop_db) {
  const double pi = std::numbers::pi;
  const double de = 1.0 / std::sqrt(std::pow(10.0, 0.1 * stop_db) - 1.0);
  const double mu = std::asinh(1.0 / de) / n;
  Zpk out;
  for (int m = -n + 1; m < n; m += 2) {
    if (m == 0) continue;  // odd n: the middle zero sits at infinity
    out.zeros.push_back(-std::conj(cplx(0.0, 1.0) / std::sin(m * pi / (2.0 * n))));
  }
  for (int m = -n + 1; m < n; m += 2) {
    const cplx p = -std::exp(cplx(0.0, pi * m / (2.0 * n)));
    const cplx warped(std::sinh(mu) * p.real(), std::cosh(mu) * p.imag());
    out.poles.push_back(1.0 / warped);
  }
  cplx num = 1.0, den = 1.0;
  for (const cplx& p : out.poles) num *= -p;
  for (const cplx& z : out.zeros) den *= -z;
  out.gain = (num / den).real();
  return out;
}

Zpk lowpass_to_bandpass(const Zpk& lp, double center, double bandwidth) {
  const int degree = static_cast<int>(lp.poles.size() - lp.zeros.size());
  auto transform = [&](const std::vector<cplx>& roots) {
    std::vector<cplx> lo, hi;
    for (const cplx& r : roots) {
      const cplx s = r * bandwidth / 2.0;
      const cplx root = std::sqrt(s * s - center * center);
      lo.push_back(s + root);
      hi.push_back(s - root);
    }
    lo.insert(lo.end(), hi.begin(), hi.end());
    return lo;
  };
  Zpk bp;
  bp.zeros = transform(lp.zeros);
  bp.poles = transform(lp.poles);
  for (int i = 0; i < degree; ++i) bp.zeros.emplace_back(0.0);
  bp.gain = lp.gain * std::pow(bandwidth, degree);
  return bp;
}

// Bilinear transform at a normalized sampling rate of 2 (fs2 = 4).
Zpk bilinear(const Zpk& analog) {
  const double fs2 = 4.0;
  const int degree = static_cast<int>(analog.poles.size() - analog.zeros.size());
  Zpk z;
  cplx num = 1.0, den = 1.0;
  for (const cplx& r : analog.zeros) {
    z.zeros.push_back((fs2 + r) / (fs2 - r));
    num *= fs2 - r;
  }
  for (const cplx& r : analog.poles) {
    z.poles.push_back((fs2 + r) / (fs2 - r));
    den *= fs2 - r;
  }
  for (int i = 0; i < degree; ++i) z.zeros.emplace_back(-1.0);
  z.gain = analog.gain * (num / den).real();
  return z;
}

// Groups roots into conjugate pairs (complex) or pairs of reals, each pair
// given as the quadratic's two roots.
std::vector<std::pair<cplx, cplx>> pair_roots(std::vector<cplx> roots) {
  constexpr double tol = 1e-10;
  std::vector<std::pair<cplx, cplx>> pairs;
  std::vector<double> reals;
  std::vector<cplx> upper;
  for (const cplx& r : roots) {
    if (std::abs(r.imag()) <= tol * std::max(1.0, std::abs(r))) {
      reals.push_back(r.real());
    } else if (r.imag() > 0) {
      upper.push_back(r);
    }
  }
  for (const cplx& r : upper) pairs.emplace_back(r, std::conj(r));
  std::sort(reals.begin(), reals.end());
  for (std::size_t i = 0; i < reals.size(); i += 2) {
    if (i + 1 < reals.size()) {
      pairs.emplace_back(reals[i], reals[i + 1]);
    } else {
      pairs.emplace_back(reals[i], cplx(0.0));  // single real root, padded
    }
  }
  return pairs;
}

std::vector<SecondOrderSection> zpk_to_sos(const Zpk& zpk) {
  auto pole_pairs = pair_roots(zpk.poles);
  auto zero_pairs = pair_roots(zpk.zeros);
  if (zero_pairs.size() > pole_pairs.size()) {
    throw Error(ErrorKind::kDesign, "filter has more zero pairs than pole pairs");
  }
  // Poles farthest from the unit circle first; each takes the nearest zero pair.
  std::sort(pole_pairs.begin(), pole_pairs.end(),
            [](const auto& a, const auto& b) { return std::abs(a.first) < std::abs(b.first); });
  std::vector<SecondOrderSection> sections;
  for (const auto& [p1, p2] : pole_pairs) {
    SecondOrderSection s;
    const cplx a1 = -(p1 + p2), a2 = p1 * p2;
    s.a1 = a1.real();
    s.a2 = a2.real();
    if (!zero_pairs.empty()) {
      auto best = std::min_element(zero_pairs.begin(), zero_pairs.end(),
                                   [&](const auto& a, const auto& b) {
                                     return std::abs(a.first - p1) < std::abs(b.first - p1);
                                   });
      const cplx b1 = -(best->first + best->second), b2 = best->first * best->second;
      s.b0 = 1.0;
      s.b1 = b1.real();
      s.b2 = b2.real();
      zero_pairs.erase(best);
    }
    sections.push_back(s);
  }
  sections.front().b0 *= zpk.gain;
  sections.front().b1 *= zpk.gain;
  sections.front().b2 *= zpk.gain;
  return sections;
}

// Steady-state section states for a unit step, chained through section gains.
std::vector<double> step_initial_state(const FilterDesign& design) {
  std::vector<double> zi;
  double scale = 1.0;
  for (const auto& s : design.sections) {
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * g;
    const double z1 = s.b1 - s.a1 * g + z2;
    zi.push_back(z1 * scale);
    zi.push_back(z2 * scale);
    scale *= g;
  }
  return zi;
}

}  // namespace

std::size_t RawRecording::sample_count() const {
  return electrodes.empty() ? 0 : electrodes.begin()->second.size();
}

void RawRecording::validate() const {
  if (!(fs > 0)) throw Error(ErrorKind::kData, "recording " + subject_id + ": fs must be > 0");
  for (std::string_view name : kRequiredElectrodes) {
    if (!electrodes.count(std::string(name))) {
      throw Error(ErrorKind::kData, "recording " + subject_id + ": missing electrode " +
                                        std::string(name));
    }
  }
  const std::size_t n = sample_count();
  for (const auto& [name, samples] : electrodes) {
    if (samples.size() != n) {
      throw Error(ErrorKind::kData, "recording " + subject_id + ": electrode " + name +
                                        " has " + std::to_string(samples.size()) +
                                        " samples, expected " + std::to_string(n));
    }
  }
  const auto seconds = static_cast<std::size_t>(std::floor(double(n) / fs));
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    if (annotations[a].size() != seconds) {
      throw Error(ErrorKind::kData, "recording " + subject_id + ": annotator " +
                                        std::to_string(a) + " has " +
                                        std::to_string(annotations[a].size()) +
                                        " labels, expected " + std::to_string(seconds));
    }
  }
}

MultiSignal derive_montage(const RawRecording& raw) {
  for (std::string_view name : kRequiredElectrodes) {
    if (!raw.electrodes.count(std::string(name))) {
      throw Error(ErrorKind::kData, "missing electrode " + std::string(name));
    }
  }
  MultiSignal out;
  out.reserve(kChannelCount);
  for (const auto& ch : kMontage) {
    const auto& a = raw.electrodes.at(std::string(ch.anode));
    const auto& b = raw.electrodes.at(std::string(ch.cathode));
    if (a.size() != b.size()) {
      throw Error(ErrorKind::kData, "electrodes of " + std::string(ch.name) + " differ in length");
    }
    Signal s(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) s[i] = double(a[i]) - double(b[i]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Segment> remove_flat_lines(const MultiSignal& signal, double fs,
                                       double min_flat_seconds) {
  if (signal.empty()) return {};
  const std::size_t n = signal.front().size();
  const auto max_run = static_cast<std::size_t>(std::floor(min_flat_seconds * fs));
  std::vector<Segment> valid;
  std::size_t seg_begin = 0, run_begin = 0, run = 0;
  auto all_zero = [&](std::size_t i) {
    for (const auto& ch : signal) {
      if (ch[i] != 0.0) return false;
    }
    return true;
  };
  auto close_run = [&](std::size_t end) {
    if (run > max_run) {
      if (run_begin > seg_begin) valid.push_back({seg_begin, run_begin});
      seg_begin = end;
    }
    run = 0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (all_zero(i)) {
      if (run == 0) run_begin = i;
      ++run;
    } else if (run) {
      close_run(i);
    }
  }
  if (run) close_run(n);
  if (seg_begin < n) valid.push_back({seg_begin, n});
  return valid;
}

FilterDesign design_cheby2_bandpass(double fs, double low_hz, double high_hz,
                                    const BandpassOptions& options) {
  const double nyquist = fs / 2.0;
  if (!(low_hz > 0 && low_hz < high_hz && high_hz < nyquist)) {
    throw Error(ErrorKind::kDesign, "bandpass needs 0 < low < high < fs/2");
  }
  if (!(options.stop_low_hz > 0 && options.stop_low_hz < low_hz &&
        options.stop_high_hz > high_hz && options.stop_high_hz < nyquist)) {
    throw Error(ErrorKind::kDesign, "stopband edges must bracket the passband inside (0, fs/2)");
  }
  if (options.order < 2 || options.order % 2 != 0) {
    throw Error(ErrorKind::kDesign, "bandpass order must be even and >= 2");
  }
  if (!(options.stop_attenuation_db > 0)) {
    throw Error(ErrorKind::kDesign, "stopband attenuation must be positive");
  }

  const double pi = std::numbers::pi;
  const double w1 = 4.0 * std::tan(pi * (options.stop_low_hz / nyquist) / 2.0);
  const double w2 = 4.0 * std::tan(pi * (options.stop_high_hz / nyquist) / 2.0);
  const Zpk proto = cheby2_prototype(options.order / 2, options.stop_attenuation_db);
  const Zpk digital = bilinear(lowpass_to_bandpass(proto, std::sqrt(w1 * w2), w2 - w1));

  FilterDesign design;
  design.sections = zpk_to_sos(digital);
  design.fs = fs;
  design.pass_low_hz = low_hz;
  design.pass_high_hz = high_hz;
  design.stop_low_hz = options.stop_low_hz;
  design.stop_high_hz = options.stop_high_hz;
  design.stop_attenuation_db = options.stop_attenuation_db;
  design.order = options.order;

  for (const cplx& p : digital.poles) {
    if (!(std::abs(p) < 1.0)) throw Error(ErrorKind::kDesign, "designed filter is unstable");
  }
  return design;
}

std::complex<double> frequency_response(const FilterDesign& design, double freq_hz) {
  const cplx z1 = std::exp(cplx(0.0, -2.0 * std::numbers::pi * freq_hz / design.fs));
  const cplx z2 = z1 * z1;
  cplx h = 1.0;
  for (const auto& s : design.sections) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return h;
}

Signal sosfilt(std::span<const double> x, const FilterDesign& design,
               std::span<const double> initial_state) {
  const std::size_t ns = design.sections.size();
  std::vector<double> state(2 * ns, 0.0);
  if (!initial_state.empty()) {
    if (initial_state.size() != state.size()) {
      throw Error(ErrorKind::kDimension, "sosfilt: initial state needs 2 values per section");
    }
    std::copy(initial_state.begin(), initial_state.end(), state.begin());
  }
  Signal y(x.begin(), x.end());
  for (std::size_t k = 0; k < ns; ++k) {
    const auto& s = design.sections[k];
    double z1 = state[2 * k], z2 = state[2 * k + 1];
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::size_t filtfilt_padding(const FilterDesign& design) {
  return 3 * static_cast<std::size_t>(design.order);
}

Signal filter_forward_backward(std::span<const double> x, const FilterDesign& design) {
  const std::size_t pad = filtfilt_padding(design);
  const std::size_t n = x.size();
  if (n <= pad) {
    throw Error(ErrorKind::kData, "segment of " + std::to_string(n) +
                                      " samples is too short for zero-phase filtering (needs > " +
                                      std::to_string(pad) + ")");
  }
  Signal ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<double> zi = step_initial_state(design);
  auto scaled = [&](double v) {
    std::vector<double> s(zi);
    for (double& e : s) e *= v;
    return s;
  };
  Signal fwd = sosfilt(ext, design, scaled(ext.front()));
  std::reverse(fwd.begin(), fwd.end());
  Signal bwd = sosfilt(fwd, design, scaled(fwd.front()));
  std::reverse(bwd.begin(), bwd.end());
  return Signal(bwd.begin() + static_cast<long>(pad), bwd.end() - static_cast<long>(pad));
}

Signal downsample(std::span<const double> x, std::size_t factor) {
  if (factor == 0) throw Error(ErrorKind::kConfig, "decimation factor must be > 0");
  Signal y;
  y.reserve((x.size() + factor - 1) / factor);
  for (std::size_t i = 0; i < x.size(); i += factor) y.push_back(x[i]);
  return y;
}

std::vector<ConsensusLabel> consensus_labels(
    const std::vector<std::vector<std::uint8_t>>& annotations) {
  if (annotations.empty()) return {};
  const std::size_t n = annotations.front().size();
  for (const auto& a : annotations) {
    if (a.size() != n) throw Error(ErrorKind::kData, "annotation sequences differ in length");
    for (std::uint8_t v : a) {
      if (v > 1) throw Error(ErrorKind::kData, "annotation values must be 0 or 1");
    }
  }
  std::vector<ConsensusLabel> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t ones = 0;
    for (const auto& a : annotations) ones += a[s];
    if (ones == annotations.size()) {
      out[s] = ConsensusLabel::kSeizure;
    } else if (ones == 0) {
      out[s] = ConsensusLabel::kNonSeizure;
    } else {
      out[s] = ConsensusLabel::kDisagreement;
    }
  }
  return out;
}

CleanSignal preprocess(const RawRecording& raw, const PreprocessOptions& options) {
  raw.validate();
  const double ratio = raw.fs / kModelRateHz;
  const auto factor = static_cast<std::size_t>(std::lround(ratio));
  if (factor == 0 || std::abs(ratio - double(factor)) > 1e-9) {
    throw Error(ErrorKind::kData, "sampling rate " + std::to_string(raw.fs) +
                                      " Hz is not an integer multiple of 32 Hz");
  }

  MultiSignal montage = derive_montage(raw);
  std::vector<Segment> segments = remove_flat_lines(montage, raw.fs, options.flat_line_seconds);
  const FilterDesign design = design_cheby2_bandpass(raw.fs, options.pass_low_hz,
                                                     options.pass_high_hz, options.bandpass);
  const std::size_t min_len = filtfilt_padding(design) + 1;
  std::erase_if(segments, [&](const Segment& s) { return s.length() < min_len; });

  const std::size_t n = raw.sample_count();
  MultiSignal filtered(kChannelCount, Signal(n, 0.0));
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    for (const Segment& seg : segments) {
      const std::span<const double> part(montage[c].data() + seg.begin, seg.length());
      const Signal y = filter_forward_backward(part, design);
      std::copy(y.begin(), y.end(), filtered[c].begin() + static_cast<long>(seg.begin));
    }
  }

  CleanSignal clean;
  clean.subject_id = raw.subject_id;
  clean.fs = raw.fs / double(factor);
  const std::size_t out_len = (n + factor - 1) / factor;
  clean.channels = Tensor<float>(Shape{kChannelCount, std::max<std::size_t>(out_len, 1)});
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    const Signal d = downsample(filtered[c], factor);
    for (std::size_t t = 0; t < d.size(); ++t) clean.channels.at(c, t) = float(d[t]);
  }
  for (const Segment& seg : segments) {
    const std::size_t b = (seg.begin + factor - 1) / factor;
    const std::size_t e = (seg.end + factor - 1) / factor;
    if (e > b) clean.valid_segments.push_back({b, e});
  }
  clean.labels = consensus_labels(raw.annotations);
  return clean;
}

}  // namespace nsd::dsp
