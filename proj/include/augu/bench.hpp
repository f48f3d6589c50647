#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "augu/model.hpp"

namespace augu {

struct FidPoint {
  int n = 0;
  std::uint64_t fid_flops = 0;
  std::uint64_t concat_flops = 0;
  double fid_ms = 0;
  double concat_ms = 0;
};

struct PolyFit {
  std::vector<double> coef;  // c0 + c1 x + c2 x^2 ...
  double rss = 0;
  double aic = 0;
  /// max_i |fit(x_i) - y_i| / |y_i|
  double max_rel_residual = 0;

  double operator()(double x) const {
    double y = 0, p = 1;
    for (double c : coef) y += c * p, p *= x;
    return y;
  }
};

/// Least-squares polynomial fit via the normal equations (long double).
inline PolyFit fit_poly(const std::vector<double>& xs, const std::vector<double>& ys, int degree) {
  const std::size_t m = static_cast<std::size_t>(degree) + 1;
  if (xs.size() != ys.size() || xs.size() < m) throw ContractError("fit_poly needs more points than coefficients");
  std::vector<std::vector<long double>> a(m, std::vector<long double>(m + 1, 0));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<long double> pw(2 * m, 1);
    for (std::size_t k = 1; k < pw.size(); ++k) pw[k] = pw[k - 1] * xs[i];
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) a[r][c] += pw[r + c];
      a[r][m] += pw[r] * ys[i];
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < m; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    if (a[c][c] == 0) throw NumericError("fit_poly: singular system");
    for (std::size_t r = 0; r < m; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= m; ++k) a[r][k] -= f * a[c][k];
    }
  }
  PolyFit fit;
  for (std::size_t c = 0; c < m; ++c) fit.coef.push_back(static_cast<double>(a[c][m] / a[c][c]));
  double scale = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = fit(xs[i]) - ys[i];
    fit.rss += r * r;
    scale = std::max(scale, std::fabs(ys[i]));
    if (ys[i] != 0) fit.max_rel_residual = std::max(fit.max_rel_residual, std::fabs(r) / std::fabs(ys[i]));
  }
  // Floor keeps the AIC finite for exact fits.
  const double n = static_cast<double>(xs.size());
  const double rss = std::max(fit.rss, 1e-18 * scale * scale * n);
  fit.aic = n * std::log(rss / n) + 2.0 * static_cast<double>(m);
  return fit;
}

/// Query plus n contexts of exactly `context_len` tokens (marker included),
/// cycling through the context kinds.
inline ContextBundle bench_bundle(const ModelConfig& cfg, int n, int context_len, std::uint64_t seed) {
  Rng rng(seed);
  auto tok = [&] {
    return static_cast<std::int32_t>(rng.uniform_int(token::first_regular, cfg.vocab_size - 1));
  };
  ContextBundle b;
  b.query.kind = SegmentKind::query;
  for (int i = 0; i < cfg.max_len_of(SegmentKind::query); ++i) b.query.ids.push_back(tok());
  static constexpr SegmentKind kinds[] = {SegmentKind::web_title, SegmentKind::web_snippet, SegmentKind::qp_rewrite,
                                          SegmentKind::qp_intent};
  for (int c = 0; c < n; ++c) {
    const SegmentKind k = kinds[c % 4];
    if (context_len > cfg.max_len_of(k)) throw ConfigError("bench context length exceeds max_len of " + std::string(to_string(k)));
    TokenSegment s{k, {token::marker(k)}, c};
    while (static_cast<int>(s.ids.size()) < context_len) s.ids.push_back(tok());
    b.contexts.push_back(std::move(s));
  }
  return b;
}

/// Encoder cost of per-segment encoding versus one encoder pass over the
/// concatenated input, for each context count in `ns`.
template <class T>
std::vector<FidPoint> fid_scaling(const UnityModel<T>& model, const std::vector<int>& ns, int context_len, int repeats = 3,
                                  std::uint64_t seed = 1) {
  using clock = std::chrono::steady_clock;
  std::vector<FidPoint> out;
  for (int n : ns) {
    const auto bundle = bench_bundle(model.config(), n, context_len, seed + static_cast<std::uint64_t>(n));
    FidPoint p;
    p.n = n;
    double best_fid = std::numeric_limits<double>::infinity(), best_cat = best_fid;
    for (int r = 0; r < repeats; ++r) {
      {
        Graph<T> g(false);
        auto net = model.bind(g);
        const auto t0 = clock::now();
        net.encode_bundle(bundle);
        best_fid = std::min(best_fid, std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        p.fid_flops = g.flops();
      }
      {
        Graph<T> g(false);
        auto net = model.bind(g);
        const auto t0 = clock::now();
        net.encode_concatenated(bundle);
        best_cat = std::min(best_cat, std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        p.concat_flops = g.flops();
      }
    }
    p.fid_ms = best_fid;
    p.concat_ms = best_cat;
    out.push_back(p);
  }
  return out;
}

inline std::string fid_csv(const std::vector<FidPoint>& pts) {
  std::ostringstream os;
  os << "n,fid_flops,concat_flops,fid_ms,concat_ms\n";
  for (const auto& p : pts) {
    char buf[64];
    os << p.n << ',' << p.fid_flops << ',' << p.concat_flops << ',';
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", p.fid_ms, p.concat_ms);
    os << buf << '\n';
  }
  return os.str();
}

/// Static SVG line chart of encoder FLOPs against context count.
inline std::string fid_svg(const std::vector<FidPoint>& pts) {
  const double W = 640, H = 420, L = 80, R = 20, Tm = 40, B = 60;
  double xmax = 1, ymax = 1;
  for (const auto& p : pts) {
    xmax = std::max(xmax, static_cast<double>(p.n));
    ymax = std::max({ymax, static_cast<double>(p.fid_flops), static_cast<double>(p.concat_flops)});
  }
  auto X = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto Y = [&](double y) { return H - B - (H - Tm - B) * y / ymax; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">Encoder FLOPs vs number of contexts</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (const auto& p : pts) {
    os << "<text x=\"" << X(p.n) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << p.n << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = ymax * i / 4;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2g", y);
    os << "<text x=\"" << L - 6 << "\" y=\"" << Y(y) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">contexts N</text>\n";
  auto series = [&](auto get, const char* color, const char* label, int row) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) os << X(p.n) << ',' << Y(static_cast<double>(get(p))) << ' ';
    os << "\"/>\n";
    for (const auto& p : pts) {
      os << "<circle cx=\"" << X(p.n) << "\" cy=\"" << Y(static_cast<double>(get(p))) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    os << "<text x=\"" << L + 12 << "\" y=\"" << Tm + 14 + 16 * row << "\" fill=\"" << color << "\">" << label << "</text>\n";
  };
  series([](const FidPoint& p) { return p.fid_flops; }, "#1f77b4", "per-segment encoding (FiD)", 0);
  series([](const FidPoint& p) { return p.concat_flops; }, "#d62728", "concatenated encoding", 1);
  os << "</svg>\n";
  return os.str();
}

}  // namespace augu
