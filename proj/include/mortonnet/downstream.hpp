#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mortonnet/features.hpp"
#include "mortonnet/model.hpp"
#include "mortonnet/train.hpp"

namespace mortonnet {

/// Pointwise part classifier: three halving (affine -> BN -> ReLU) blocks
/// and a final affine map to the class scores. in_dim must be >= 8 so every
/// hidden width stays positive.
struct ClassifierConfig {
    int in_dim = 0;
    int num_classes = 0;

    std::vector<int> layer_widths() const;  // {in/2, in/4, in/8}
    void validate() const;
};

struct Classifier {
    ClassifierConfig config;
    std::vector<EncoderLayer> blocks;
    OutputHead output;
};

struct ClassifierGrads {
    std::vector<EncoderLayerGrad> blocks;
    OutputHead output;
};

struct ClassifierCache {
    std::vector<ForwardCache::EncLayerCache> blocks;
    Eigen::MatrixXd output_in;
};

std::vector<TensorView> trainable_views(Classifier& c);
std::vector<TensorView> trainable_views(ClassifierGrads& g);

Classifier init_classifier(const ClassifierConfig& cfg, std::uint64_t seed);

Eigen::MatrixXd classifier_forward(const Eigen::MatrixXd& features, Classifier& c, Mode mode,
                                   ClassifierCache* cache = nullptr);

ClassifierGrads classifier_backward(const Classifier& c, const ClassifierCache& cache,
                                    const Eigen::MatrixXd& dlogits);

/// Mean softmax cross-entropy and dL/dlogits.
std::pair<double, Eigen::MatrixXd> cross_entropy_loss(const Eigen::MatrixXd& logits,
                                                      const std::vector<int>& labels);

struct ClassifierEpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double lr = 0.0;
};

struct ClassifierTrainResult {
    Classifier classifier;
    std::vector<ClassifierEpochLog> log;
};

/// Cross-entropy + Adam with the plateau schedule driven by the training
/// loss; bit-deterministic in (seed, data, config). `rows` selects which
/// feature rows participate (masked/invalid rows are the caller's to drop).
ClassifierTrainResult train_classifier(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                       const std::vector<std::uint32_t>& rows,
                                       const ClassifierConfig& cfg, const TrainConfig& tcfg);

/// Convenience overload: trains on every valid row of the feature matrix.
ClassifierTrainResult train_classifier(const FeatureMatrix& features, const std::vector<int>& labels,
                                       const ClassifierConfig& cfg, const TrainConfig& tcfg);

std::vector<int> classifier_predict(Classifier& c, const Eigen::MatrixXd& features,
                                    const std::vector<std::uint32_t>& rows, int batch_size = 512);

/// Row-major confusion counts: rows are ground truth, columns predictions.
struct ConfusionMatrix {
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

    explicit ConfusionMatrix(int num_classes = 0);
    void add(int truth, int predicted);
    std::int64_t total() const { return counts.sum(); }
};

struct SegmentationMetrics {
    double miou = 0.0;
    double macc = 0.0;
    double oa = 0.0;
};

/// Per-class IoU = TP / (TP + FP + FN), averaged over classes whose union is
/// non-empty; mAcc averages recall over classes present in ground truth; OA
/// is trace / total.
SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm);

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                           int num_classes);

struct LabelFractionRow {
    double fraction = 0.0;
    double miou = 0.0;
    std::size_t train_rows = 0;
};

/// Trains one classifier per label fraction on a stratified subsample of the
/// training rows and evaluates each on the same held-out rows. Fraction 1.0
/// degenerates to plain train_classifier on the full training side.
std::vector<LabelFractionRow> label_fraction_study(const Eigen::MatrixXd& features,
                                                   const std::vector<int>& labels,
                                                   const std::vector<std::uint32_t>& train_rows,
                                                   const std::vector<std::uint32_t>& test_rows,
                                                   const std::vector<double>& fractions,
                                                   const ClassifierConfig& cfg, const TrainConfig& tcfg);

/// Stratified subsample: ceil(fraction * n_c) seeded picks per class c,
/// returned in ascending row order. fraction 1.0 returns `rows` unchanged.
std::vector<std::uint32_t> stratified_subsample(const std::vector<int>& labels,
                                                const std::vector<std::uint32_t>& rows, double fraction,
                                                std::uint64_t seed);

/// Seeded split of the valid feature rows into train/test sides.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_rows(
    const FeatureMatrix& features, double test_fraction, std::uint64_t seed);

}  // namespace mortonnet
