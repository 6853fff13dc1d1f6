#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace phylocorr::cli {

namespace {

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};

// Diverging blue-white-red for t in [-1, 1].
std::string diverging(double t) {
  t = std::clamp(t, -1.0, 1.0);
  int r, g, b;
  if (t < 0) {
    r = static_cast<int>(255 * (1 + t));
    g = r;
    b = 255;
  } else {
    r = 255;
    g = static_cast<int>(255 * (1 - t));
    b = g;
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::vector<Trend> trend_lines(const std::vector<ScatterPoint>& pts, int min_size) {
  std::vector<std::string> order{"all"};
  std::map<std::string, std::vector<const ScatterPoint*>> groups;
  for (const auto& p : pts) {
    groups["all"].push_back(&p);
    if (p.family.rfind("isolate:", 0) == 0) continue;
    auto& g = groups[p.family];
    if (g.empty()) order.push_back(p.family);
    g.push_back(&p);
  }
  std::vector<Trend> out;
  for (const auto& name : order) {
    const auto& g = groups[name];
    if (name != "all" && static_cast<int>(g.size()) < min_size) continue;
    double mx = 0, my = 0;
    for (auto* p : g) {
      mx += p->x;
      my += p->y;
    }
    mx /= static_cast<double>(g.size());
    my /= static_cast<double>(g.size());
    double sxy = 0, sxx = 0;
    for (auto* p : g) {
      sxy += (p->x - mx) * (p->y - my);
      sxx += (p->x - mx) * (p->x - mx);
    }
    if (!(sxx > 0)) continue;
    const double slope = sxy / sxx;
    out.push_back({name, static_cast<int>(g.size()), slope, my - slope * mx});
  }
  return out;
}

std::string scatter_svg(const std::vector<ScatterPoint>& pts, const std::vector<Trend>& trends,
                        const std::string& xlabel, const std::string& ylabel) {
  const double W = 520, H = 520, m = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!pts.empty()) {
    x0 = x1 = pts[0].x;
    y0 = y1 = pts[0].y;
    for (const auto& p : pts) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto sx = [&](double x) { return m + (x - x0) / (x1 - x0) * (W - 2 * m); };
  auto sy = [&](double y) { return H - m - (y - y0) / (y1 - y0) * (H - 2 * m); };

  // colours for the largest families; everything else grey
  std::map<std::string, int> size;
  for (const auto& p : pts) ++size[p.family];
  std::vector<std::pair<int, std::string>> big;
  for (const auto& [f, n] : size)
    if (f.rfind("isolate:", 0) != 0) big.push_back({-n, f});
  std::sort(big.begin(), big.end());
  std::map<std::string, std::string> colour;
  for (std::size_t i = 0; i < big.size() && i < 8; ++i) colour[big[i].second] = kPalette[i];
  auto col = [&](const std::string& f) {
    auto it = colour.find(f);
    return it == colour.end() ? std::string("#b0b0b0") : it->second;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << H - m << "\" x2=\"" << W - m << "\" y2=\"" << H - m
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << H - m << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"13\">" << esc(xlabel)
     << "</text>\n";
  os << "<text x=\"14\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
     << H / 2 << ")\">" << esc(ylabel) << "</text>\n";
  for (const auto& p : pts)
    os << "<circle cx=\"" << num(sx(p.x)) << "\" cy=\"" << num(sy(p.y)) << "\" r=\"2\" fill=\"" << col(p.family)
       << "\" fill-opacity=\"0.6\"/>\n";
  for (const auto& t : trends) {
    const bool all = t.group == "all";
    if (!all && !colour.count(t.group)) continue;
    os << "<line x1=\"" << num(sx(x0)) << "\" y1=\"" << num(sy(t.intercept + t.slope * x0)) << "\" x2=\""
       << num(sx(x1)) << "\" y2=\"" << num(sy(t.intercept + t.slope * x1)) << "\" stroke=\""
       << (all ? "black" : col(t.group)) << "\" stroke-width=\"" << (all ? 2.5 : 1.2) << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string crosstab_svg(const CrossTab& ct) {
  const double W = 640, H = 420, m = 50, legend = 130;
  const auto rows = static_cast<int>(ct.row_labels.size());
  const auto cols = static_cast<int>(ct.col_labels.size());
  int top = 1;
  for (int r = 0; r < rows; ++r) top = std::max(top, ct.counts.row(r).sum());
  const double bw = (W - 2 * m - legend) / std::max(rows, 1);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int r = 0; r < rows; ++r) {
    double y = H - m;
    for (int c = 0; c < cols; ++c) {
      const double h = ct.counts(r, c) / static_cast<double>(top) * (H - 2 * m);
      y -= h;
      os << "<rect x=\"" << num(m + r * bw + 4) << "\" y=\"" << num(y) << "\" width=\"" << num(bw - 8)
         << "\" height=\"" << num(h) << "\" fill=\"" << kPalette[c % 10] << "\"><title>" << esc(ct.row_labels[r])
         << " / " << esc(ct.col_labels[c]) << ": " << ct.counts(r, c) << "</title></rect>\n";
    }
    os << "<text x=\"" << num(m + (r + 0.5) * bw) << "\" y=\"" << H - m + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << esc(ct.row_labels[r]) << "</text>\n";
  }
  for (int c = 0; c < cols; ++c) {
    const double y = m + 20.0 * c;
    os << "<rect x=\"" << W - legend << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[c % 10]
       << "\"/>\n<text x=\"" << W - legend + 18 << "\" y=\"" << y + 10 << "\" font-size=\"12\">"
       << esc(ct.col_labels[c]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string tree_svg(const Tree& tree, const std::vector<NodeReconstruction>& recs) {
  const std::vector<double> depth = tree.depths();
  double maxd = 0;
  for (double d : depth) maxd = std::max(maxd, d);
  if (!(maxd > 0)) maxd = 1;
  const double row = 6, left = 20, W = 900, labelw = 120;
  const double H = row * static_cast<double>(tree.tip_count()) + 40;
  std::vector<double> y(tree.node_count(), 0.0);
  {
    int k = 0;
    for (int t : tree.tips()) y[static_cast<std::size_t>(t)] = 20 + row * k++;
    const auto& pre = tree.preorder();
    for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
      const auto& n = tree.node(*it);
      if (n.is_tip()) continue;
      double s = 0;
      for (int c : n.children) s += y[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(*it)] = s / static_cast<double>(n.children.size());
    }
  }
  double centre = 0, spread = 0;
  for (const auto& r : recs) centre += r.mean[0];
  if (!recs.empty()) centre /= static_cast<double>(recs.size());
  for (const auto& r : recs) spread = std::max(spread, std::abs(r.mean[0] - centre));
  if (!(spread > 0)) spread = 1;
  auto sx = [&](double d) { return left + d / maxd * (W - left - labelw); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << num(H) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int v : tree.preorder()) {
    const auto vi = static_cast<std::size_t>(v);
    const int p = tree.node(v).parent;
    const std::string c = vi < recs.size() ? diverging((recs[vi].mean[0] - centre) / spread) : "#000000";
    if (p >= 0) {
      const auto pi = static_cast<std::size_t>(p);
      os << "<path d=\"M" << num(sx(depth[pi])) << " " << num(y[pi]) << " V" << num(y[vi]) << " H"
         << num(sx(depth[vi])) << "\" fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\"/>\n";
    }
    if (tree.node(v).is_tip())
      os << "<text x=\"" << num(sx(depth[vi]) + 3) << "\" y=\"" << num(y[vi] + 2) << "\" font-size=\"5\">"
         << esc(tree.node(v).label) << "</text>\n";
    else
      os << "<circle cx=\"" << num(sx(depth[vi])) << "\" cy=\"" << num(y[vi]) << "\" r=\"2\" fill=\"" << c
         << "\" stroke=\"#333\" stroke-width=\"0.3\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace phylocorr::cli
