#include "tutee/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tutee/error.hpp"

namespace tutee {

using nlohmann::json;

namespace {

constexpr std::string_view kFlowButtons[] = {"describe", "explain", "compare", "correct",
                                             "quiz",     "funfact", "telljoke"};

bool is_flow_button(std::string_view b) {
  return std::find(std::begin(kFlowButtons), std::end(kFlowButtons), b) != std::end(kFlowButtons);
}

// True when x beats the incumbent by more than rounding noise.
bool strictly_less(double x, double best) {
  return x < best - 1e-12 * std::max(1.0, std::abs(best));
}

}  // namespace

std::vector<double> FeatureVector::values() const {
  std::vector<double> v;
  for (auto k : kTrackedRates) {
    auto it = rates.find(std::string(k));
    v.push_back(it == rates.end() ? 0.0 : it->second);
  }
  return v;
}

std::optional<std::string> button_kind(const InteractionEvent& e) {
  if (e.kind == "notebook_open") return std::string("notebook_view");
  if (e.kind == "button_click") {
    const auto flow = e.payload.value("flow", std::string{});
    if (is_flow_button(flow)) return flow;
  }
  return std::nullopt;
}

std::vector<std::string> users_in(std::span<const InteractionEvent> log) {
  std::set<std::string> users;
  for (const auto& e : log) {
    if (button_kind(e)) users.insert(e.user);
  }
  return {users.begin(), users.end()};
}

FeatureVector extract_features(std::span<const InteractionEvent> log, std::string_view user) {
  FeatureVector fv;
  fv.user = std::string(user);
  for (auto k : kButtonKinds) fv.clicks[std::string(k)] = 0;
  double first = 0, last = 0;
  bool seen = false;
  for (const auto& e : log) {
    if (e.user != user) continue;
    if (!seen) first = last = e.ts;
    seen = true;
    first = std::min(first, e.ts);
    last = std::max(last, e.ts);
    if (auto b = button_kind(e)) {
      ++fv.clicks[*b];
      ++fv.total_clicks;
      if (*b != "notebook_view") ++fv.conversations;
    }
  }
  if (fv.total_clicks == 0) throw Error(Errc::empty_log, "user '" + fv.user + "' has no button clicks");
  for (const auto& [k, c] : fv.clicks) fv.rates[k] = static_cast<double>(c) / fv.total_clicks;
  fv.session_minutes = (last - first) / 60.0;
  return fv;
}

const char* to_string(Linkage l) {
  switch (l) {
    case Linkage::ward: return "ward";
    case Linkage::single: return "single";
    case Linkage::complete: return "complete";
    case Linkage::average: return "average";
  }
  return "ward";
}

const char* to_string(Distance d) { return d == Distance::euclidean ? "euclidean" : "manhattan"; }

Linkage parse_linkage(std::string_view text) {
  for (auto l : {Linkage::ward, Linkage::single, Linkage::complete, Linkage::average}) {
    if (text == to_string(l)) return l;
  }
  throw Error(Errc::invalid_argument, "unknown linkage '" + std::string(text) + "'");
}

Distance parse_distance(std::string_view text) {
  if (text == "euclidean") return Distance::euclidean;
  if (text == "manhattan") return Distance::manhattan;
  throw Error(Errc::invalid_argument, "unknown distance '" + std::string(text) + "'");
}

double distance(std::span<const double> a, std::span<const double> b, Distance d) {
  if (a.size() != b.size()) throw Error(Errc::invalid_argument, "points of different dimension");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += d == Distance::euclidean ? diff * diff : std::abs(diff);
  }
  return d == Distance::euclidean ? std::sqrt(acc) : acc;
}

Dendrogram agglomerate(const Points& points, Linkage linkage, Distance metric) {
  if (linkage == Linkage::ward && metric != Distance::euclidean) {
    throw Error(Errc::invalid_argument, "ward linkage needs euclidean distance");
  }
  const int n = static_cast<int>(points.size());
  Dendrogram out;
  out.n = n;
  if (n == 0) return out;

  // d[i][j] over cluster ids; ward works on squared distances.
  const int total = 2 * n - 1;
  std::vector<std::vector<double>> d(total, std::vector<double>(total, 0.0));
  std::vector<int> size(total, 1);
  std::vector<int> active(n);
  std::iota(active.begin(), active.end(), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double v = distance(points[i], points[j], metric);
      if (linkage == Linkage::ward) v *= v;
      d[i][j] = d[j][i] = v;
    }
  }

  for (int step = 0; step + 1 < n; ++step) {
    int bi = -1, bj = -1;
    double best = 0;
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const int i = active[x], j = active[y];
        if (bi < 0 || strictly_less(d[i][j], best)) {
          best = d[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    const int m = n + step;
    size[m] = size[bi] + size[bj];
    const double ni = size[bi], nj = size[bj];
    for (int k : active) {
      if (k == bi || k == bj) continue;
      const double nk = size[k];
      double v = 0;
      switch (linkage) {
        case Linkage::single: v = std::min(d[k][bi], d[k][bj]); break;
        case Linkage::complete: v = std::max(d[k][bi], d[k][bj]); break;
        case Linkage::average: v = (ni * d[k][bi] + nj * d[k][bj]) / (ni + nj); break;
        case Linkage::ward:
          v = ((ni + nk) * d[k][bi] + (nj + nk) * d[k][bj] - nk * best) / (ni + nj + nk);
          break;
      }
      d[k][m] = d[m][k] = v;
    }
    out.merges.push_back({bi, bj, linkage == Linkage::ward ? std::sqrt(std::max(best, 0.0)) : best, size[m]});
    std::erase(active, bi);
    std::erase(active, bj);
    active.push_back(m);  // ids grow, so `active` stays sorted
  }
  return out;
}

std::vector<int> cut(const Dendrogram& d, int k) {
  if (k < 1 || k > d.n) throw Error(Errc::invalid_argument, "cannot cut " + std::to_string(d.n) + " points into " +
                                                               std::to_string(k) + " clusters");
  std::vector<int> parent(2 * d.n);
  std::iota(parent.begin(), parent.end(), 0);
  for (int s = 0; s < d.n - k; ++s) {
    parent[d.merges[s].a] = d.n + s;
    parent[d.merges[s].b] = d.n + s;
  }
  auto root = [&](int x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  std::map<int, int> label_of_root;
  std::vector<int> labels(d.n);
  for (int i = 0; i < d.n; ++i) {
    auto [it, fresh] = label_of_root.try_emplace(root(i), static_cast<int>(label_of_root.size()));
    labels[i] = it->second;
  }
  return labels;
}

std::vector<int> hcluster(const Points& points, int k, Linkage linkage, Distance metric) {
  if (k < 2) throw Error(Errc::invalid_argument, "k must be at least 2");
  if (static_cast<int>(points.size()) < k) {
    throw Error(Errc::too_few_points,
                std::to_string(points.size()) + " points cannot form " + std::to_string(k) + " clusters");
  }
  return cut(agglomerate(points, linkage, metric), k);
}

Silhouette silhouette(const Points& points, std::span<const int> labels, Distance metric) {
  if (points.size() != labels.size()) throw Error(Errc::invalid_argument, "one label per point required");
  const std::set<int> clusters(labels.begin(), labels.end());
  if (clusters.size() < 2) throw Error(Errc::single_cluster, "silhouette needs at least two clusters");
  const std::size_t n = points.size();
  Silhouette out;
  out.per_point.resize(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> sums;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      auto& s = sums[labels[j]];
      s.first += distance(points[i], points[j], metric);
      ++s.second;
    }
    auto own = sums.find(labels[i]);
    if (own == sums.end()) continue;  // singleton
    const double a = own->second.first / own->second.second;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : sums) {
      if (label != labels[i]) b = std::min(b, s.first / s.second);
    }
    const double denom = std::max(a, b);
    out.per_point[i] = denom > 0 ? (b - a) / denom : 0.0;
  }
  out.average = std::accumulate(out.per_point.begin(), out.per_point.end(), 0.0) / static_cast<double>(n);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const auto mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2;
}

ClusterReport strategy_report(std::span<const InteractionEvent> log, const ReportOptions& options) {
  ClusterReport r;
  r.options = options;
  for (const auto& user : users_in(log)) {
    auto fv = extract_features(log, user);
    if (fv.conversations < options.min_conversations) {
      r.excluded.push_back(user);
      continue;
    }
    r.users.push_back(user);
    r.vectors.push_back(std::move(fv));
  }
  const int n = static_cast<int>(r.users.size());
  if (n < 2 || n < options.k) {
    throw Error(Errc::too_few_points, std::to_string(n) + " active users cannot form " +
                                          std::to_string(options.k) + " clusters");
  }
  const double dims = std::size(kTrackedRates);
  if (dims > std::log2(static_cast<double>(n))) {
    std::ostringstream w;
    w << dims << " features for " << n << " users exceeds log2(N) = " << std::setprecision(3)
      << std::log2(static_cast<double>(n)) << "; clusters may be unstable";
    r.warnings.push_back(w.str());
  }

  Points points;
  for (const auto& fv : r.vectors) points.push_back(fv.values());
  const auto raw = hcluster(points, options.k, options.linkage, options.metric);

  // Relabel so that 0 is the largest cluster; `raw` already orders equal sizes by first member.
  std::vector<int> raw_sizes(options.k, 0);
  for (int l : raw) ++raw_sizes[l];
  std::vector<int> order(options.k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return raw_sizes[a] > raw_sizes[b]; });
  std::vector<int> relabel(options.k);
  for (int i = 0; i < options.k; ++i) relabel[order[i]] = i;
  for (int l : raw) r.labels.push_back(relabel[l]);

  r.sizes.assign(options.k, 0);
  for (int l : r.labels) ++r.sizes[l];
  r.medians.resize(options.k);
  for (int c = 0; c < options.k; ++c) {
    for (std::size_t f = 0; f < std::size(kTrackedRates); ++f) {
      std::vector<double> vals;
      for (int i = 0; i < n; ++i) {
        if (r.labels[i] == c) vals.push_back(points[i][f]);
      }
      r.medians[c][std::string(kTrackedRates[f])] = median(std::move(vals));
    }
  }
  r.quality = silhouette(points, r.labels, options.metric);
  return r;
}

json to_json(const ClusterReport& r) {
  json j;
  j["linkage"] = to_string(r.options.linkage);
  j["distance"] = to_string(r.options.metric);
  j["k"] = r.options.k;
  j["min_conversations"] = r.options.min_conversations;
  j["n"] = r.users.size();
  j["average_silhouette"] = r.quality.average;
  j["cluster_sizes"] = r.sizes;
  j["medians"] = r.medians;
  j["excluded"] = r.excluded;
  j["warnings"] = r.warnings;
  j["assignments"] = json::object();
  j["users"] = json::array();
  for (std::size_t i = 0; i < r.users.size(); ++i) {
    j["assignments"][r.users[i]] = r.labels[i];
    j["users"].push_back({{"user", r.users[i]},
                          {"cluster", r.labels[i]},
                          {"silhouette", r.quality.per_point[i]},
                          {"rates", r.vectors[i].rates},
                          {"total_clicks", r.vectors[i].total_clicks},
                          {"conversations", r.vectors[i].conversations},
                          {"session_minutes", r.vectors[i].session_minutes}});
  }
  return j;
}

std::string to_text(const ClusterReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << r.users.size() << " users, " << to_string(r.options.linkage) << " linkage, "
      << to_string(r.options.metric) << " distance, k=" << r.options.k << "\n";
  if (!r.excluded.empty()) {
    out << "excluded (fewer than " << r.options.min_conversations << " conversations):";
    for (const auto& u : r.excluded) out << ' ' << u;
    out << "\n";
  }
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  out << "average silhouette " << std::setprecision(3) << r.quality.average << std::setprecision(2) << "\n";
  out << "cluster  size";
  for (auto k : kTrackedRates) out << "  " << std::setw(13) << k;
  out << "\n";
  for (std::size_t c = 0; c < r.sizes.size(); ++c) {
    out << std::setw(7) << c << std::setw(6) << r.sizes[c];
    for (auto k : kTrackedRates) out << "  " << std::setw(13) << r.medians[c].at(std::string(k));
    out << "\n";
  }
  return out.str();
}

RateProfile c1_profile() {
  return {{{"describe", .31}, {"explain", .20}, {"quiz", .18}, {"funfact", .10}, {"notebook_view", .26},
           {"compare", .057}, {"correct", .022}, {"telljoke", .021}}};
}

RateProfile c2_profile() {
  return {{{"describe", .74}, {"explain", .02}, {"quiz", .06}, {"funfact", .14}, {"notebook_view", .17},
           {"compare", .057}, {"correct", .022}, {"telljoke", .021}}};
}

RateProfile normalized(const RateProfile& p) {
  double total = 0;
  for (const auto& [k, v] : p.rates) total += v;
  RateProfile out = p;
  if (total > 0) {
    for (auto& [k, v] : out.rates) v /= total;
  }
  return out;
}

namespace {

// Largest-remainder rounding of rates to an integer number of clicks.
std::map<std::string, int> to_clicks(const std::map<std::string, double>& rates, int clicks) {
  std::map<std::string, int> out;
  std::vector<std::pair<double, std::string>> rem;
  int used = 0;
  for (const auto& [k, v] : rates) {
    const double exact = v * clicks;
    out[k] = static_cast<int>(std::floor(exact));
    used += out[k];
    rem.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < clicks && i < rem.size(); ++i, ++used) ++out[rem[i].second];
  return out;
}

}  // namespace

Simulation simulate_c1c2(const SimulationOptions& options) {
  if (options.n < 2 || options.c2_users < 0 || options.c2_users > options.n || options.clicks < 1) {
    throw Error(Errc::invalid_argument, "bad simulation parameters");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.jitter);
  Simulation sim;
  const int width = options.n >= 100 ? 3 : 2;
  for (int u = 0; u < options.n; ++u) {
    std::ostringstream id;
    id << 'p' << std::setw(width) << std::setfill('0') << (u + 1);
    const std::string user = id.str();
    const int cluster = u >= options.n - options.c2_users ? 1 : 0;
    sim.truth[user] = cluster;

    RateProfile p = cluster == 0 ? c1_profile() : c2_profile();
    for (auto k : kTrackedRates) {
      auto& v = p.rates[std::string(k)];
      v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    const auto counts = to_clicks(normalized(p).rates, options.clicks);

    std::vector<std::string> presses;
    for (const auto& [k, c] : counts) presses.insert(presses.end(), c, k);
    std::shuffle(presses.begin(), presses.end(), rng);
    const double t0 = 1'600'000'000.0 + 86'400.0 * u;
    for (std::size_t i = 0; i < presses.size(); ++i) {
      InteractionEvent e;
      e.ts = t0 + 20.0 * static_cast<double>(i);
      e.user = user;
      e.session = "sim-" + user;
      if (presses[i] == "notebook_view") {
        e.kind = "notebook_open";
      } else {
        e.kind = "button_click";
        e.payload = {{"flow", presses[i]}};
      }
      sim.log.push_back(std::move(e));
    }
  }
  return sim;
}

}  // namespace tutee
