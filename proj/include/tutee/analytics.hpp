#pragma once
// Teaching-strategy quantification: per-tutor button-click rates, bottom-up
// hierarchical clustering and silhouette scoring over an interaction log.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tutee/telemetry.hpp"

namespace tutee {

// The seven conversation buttons plus the notebook button.
inline constexpr std::string_view kButtonKinds[] = {"describe", "explain", "compare",  "correct",
                                                    "quiz",     "funfact", "telljoke", "notebook_view"};
// Rates kept as clustering features; the other three stay in the denominator.
inline constexpr std::string_view kTrackedRates[] = {"describe", "explain", "quiz", "funfact", "notebook_view"};

struct FeatureVector {
  std::string user;
  std::map<std::string, double> rates;  // all eight button kinds
  std::map<std::string, int> clicks;
  int total_clicks = 0;
  int conversations = 0;  // flow button clicks only
  double session_minutes = 0;

  std::vector<double> values() const;  // tracked rates, kTrackedRates order
};

// Button kind of an event, if it is a button press at all.
std::optional<std::string> button_kind(const InteractionEvent& e);

std::vector<std::string> users_in(std::span<const InteractionEvent> log);  // sorted
FeatureVector extract_features(std::span<const InteractionEvent> log, std::string_view user);  // EmptyLog

enum class Linkage { ward, single, complete, average };
enum class Distance { euclidean, manhattan };

const char* to_string(Linkage l);
const char* to_string(Distance d);
Linkage parse_linkage(std::string_view text);
Distance parse_distance(std::string_view text);

double distance(std::span<const double> a, std::span<const double> b, Distance d);

// Clusters are numbered 0..n-1 for the points and n+i for the i-th merge.
struct Merge {
  int a = 0;  // a < b
  int b = 0;
  double height = 0;
  int size = 0;
};

struct Dendrogram {
  int n = 0;
  std::vector<Merge> merges;
};

using Points = std::vector<std::vector<double>>;

// Lance-Williams agglomeration. Equal distances go to the lexicographically
// smallest (id, id) pair. Ward heights follow the usual sqrt convention, so a
// merge of two points sits at their Euclidean distance.
Dendrogram agglomerate(const Points& points, Linkage linkage = Linkage::ward,
                       Distance metric = Distance::euclidean);

// Labels after stopping at k clusters, numbered by each cluster's smallest point index.
std::vector<int> cut(const Dendrogram& d, int k);

std::vector<int> hcluster(const Points& points, int k, Linkage linkage = Linkage::ward,
                          Distance metric = Distance::euclidean);

struct Silhouette {
  double average = 0;
  std::vector<double> per_point;
};

// Singleton clusters score 0. SingleCluster if fewer than two labels.
Silhouette silhouette(const Points& points, std::span<const int> labels, Distance metric = Distance::euclidean);

struct ReportOptions {
  int k = 2;
  Linkage linkage = Linkage::ward;
  Distance metric = Distance::euclidean;
  int min_conversations = 5;
};

struct ClusterReport {
  std::vector<std::string> users;       // clustered users, sorted
  std::vector<FeatureVector> vectors;   // same order
  std::vector<int> labels;              // 0 = largest cluster
  std::vector<int> sizes;
  std::vector<std::map<std::string, double>> medians;  // per cluster, tracked rates
  Silhouette quality;
  std::vector<std::string> excluded;    // below the activity threshold
  std::vector<std::string> warnings;
  ReportOptions options;
};

ClusterReport strategy_report(std::span<const InteractionEvent> log, const ReportOptions& options = {});
nlohmann::json to_json(const ClusterReport& r);
std::string to_text(const ClusterReport& r);

double median(std::vector<double> values);

struct RateProfile {
  std::map<std::string, double> rates;  // any subset of kButtonKinds
};

// Synthetic log from two rate profiles: the last `c2_users` users follow C2,
// the others C1. Tracked rates are jittered (Gaussian, clipped to [0, 1]), the
// profile is normalized and rounded to `clicks` button presses per user.
struct SimulationOptions {
  int n = 40;
  int c2_users = 4;
  std::uint64_t seed = 1;
  double jitter = 0.05;
  int clicks = 100;
};

RateProfile c1_profile();
RateProfile c2_profile();
RateProfile normalized(const RateProfile& p);

struct Simulation {
  std::vector<InteractionEvent> log;
  std::map<std::string, int> truth;  // user -> 0 (C1) or 1 (C2)
};

Simulation simulate_c1c2(const SimulationOptions& options);

}  // namespace tutee
