#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sacl/adversarial/perturb.hpp"
#include "sacl/core/tensor.hpp"

namespace sacl {

struct ClassificationReport {
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> per_class_f1;
    std::vector<std::size_t> support;
    std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
    std::vector<std::vector<double>> normalized;      // rows sum to 1, or all zero
    std::vector<bool> zero_support;                   // rows left at zero
};

ClassificationReport classification_report(std::span<const int> y_true, std::span<const int> y_pred,
                                           std::size_t num_classes);

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<Tensor> centroids;
    double inertia = 0.0;
    std::size_t iterations = 0;  // of the winning restart
};

// Lloyd with k-means++ seeding; best inertia over restarts. Restart r uses
// derive_seed(seed, kmeans stream, r).
KMeansResult kmeans(std::span<const Tensor> points, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300,
                    std::size_t restarts = 10);

struct SupervisedScores {
    double ari = 0.0;
    double nmi = 0.0;
    double fmi = 0.0;
};

SupervisedScores supervised_clustering(std::span<const int> predicted, std::span<const int> truth);

struct UnsupervisedScores {
    double sc = 0.0;
    double chi = 0.0;
    double dbi = 0.0;
};

UnsupervisedScores unsupervised_clustering(std::span<const Tensor> points, std::span<const int> assignments);

struct ClusteringReport {
    SupervisedScores supervised;
    UnsupervisedScores unsupervised;
    std::size_t k = 0;
    std::uint64_t seed = 0;
};

// K-means on `points`, then all six scores against `truth`.
ClusteringReport clustering_report(std::span<const Tensor> points, std::span<const int> truth, std::size_t k,
                                   std::uint64_t seed);

struct RobustnessCurve {
    std::vector<double> epsilons;
    std::vector<double> weighted_f1;  // mean over seeds
    std::vector<double> std_dev;      // sample std over seeds (0 for one seed)
    std::size_t seeds = 0;
};

// One parameter set per seed; CE-based CAT attack at every epsilon.
RobustnessCurve robustness_curve(const Model& model, std::span<const ParamMap> params_per_seed,
                                 std::span<const Conversation> test, std::span<const double> epsilons);

struct TTestResult {
    double t = 0.0;
    double p = 0.0;
    std::size_t dof = 0;
    // Zero-variance differences: t is 0 (or +-inf) and p is NaN.
    bool degenerate = false;
};

// Two-sided paired t-test on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
double sample_std(std::span<const double> v);
// Scores in [0,1] rendered as percentages, e.g. "69.22±0.54".
std::string format_mean_std(std::span<const double> scores);

nlohmann::json to_json(const ClassificationReport& r, std::span<const std::string> label_names = {});
nlohmann::json to_json(const ClusteringReport& r);
nlohmann::json to_json(const RobustnessCurve& c);
nlohmann::json to_json(const TTestResult& t);

// One row per class: class,name,precision,recall,f1,support.
std::string per_class_csv(const ClassificationReport& r, std::span<const std::string> label_names = {});
std::string confusion_csv(const ClassificationReport& r, bool normalized);
// One row per epsilon, one column pair per named curve. Curves must share epsilons.
std::string curves_csv(std::span<const RobustnessCurve> curves, std::span<const std::string> names);

}  // namespace sacl
