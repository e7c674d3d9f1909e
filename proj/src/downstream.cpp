#include "mortonnet/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mortonnet/rng.hpp"

namespace mortonnet {

std::vector<int> ClassifierConfig::layer_widths() const {
    return {in_dim / 2, in_dim / 4, in_dim / 8};
}

void ClassifierConfig::validate() const {
    if (in_dim < 8) throw std::invalid_argument("ClassifierConfig: in_dim must be >= 8");
    if (num_classes < 2) throw std::invalid_argument("ClassifierConfig: need at least 2 classes");
}

std::vector<TensorView> trainable_views(Classifier& c) {
    std::vector<TensorView> out;
    for (std::size_t l = 0; l < c.blocks.size(); ++l) {
        std::string p = "block" + std::to_string(l) + "/";
        out.push_back({p + "weight", c.blocks[l].weight.data(), c.blocks[l].weight.rows(), c.blocks[l].weight.cols()});
        out.push_back({p + "gamma", c.blocks[l].gamma.data(), c.blocks[l].gamma.rows(), 1});
        out.push_back({p + "beta", c.blocks[l].beta.data(), c.blocks[l].beta.rows(), 1});
    }
    out.push_back({"output/weight", c.output.weight.data(), c.output.weight.rows(), c.output.weight.cols()});
    out.push_back({"output/bias", c.output.bias.data(), c.output.bias.rows(), 1});
    return out;
}

std::vector<TensorView> trainable_views(ClassifierGrads& g) {
    std::vector<TensorView> out;
    for (std::size_t l = 0; l < g.blocks.size(); ++l) {
        std::string p = "block" + std::to_string(l) + "/";
        out.push_back({p + "weight", g.blocks[l].weight.data(), g.blocks[l].weight.rows(), g.blocks[l].weight.cols()});
        out.push_back({p + "gamma", g.blocks[l].gamma.data(), g.blocks[l].gamma.rows(), 1});
        out.push_back({p + "beta", g.blocks[l].beta.data(), g.blocks[l].beta.rows(), 1});
    }
    out.push_back({"output/weight", g.output.weight.data(), g.output.weight.rows(), g.output.weight.cols()});
    out.push_back({"output/bias", g.output.bias.data(), g.output.bias.rows(), 1});
    return out;
}

Classifier init_classifier(const ClassifierConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Classifier c;
    c.config = cfg;
    Rng rng(Rng::mix(seed, 0xc1a55ULL));
    int in = cfg.in_dim;
    for (int width : cfg.layer_widths()) {
        c.blocks.push_back(init_dense_bn_layer(width, in, rng));
        in = width;
    }
    c.output.weight.resize(cfg.num_classes, in);
    {
        double a = std::sqrt(6.0 / static_cast<double>(in + cfg.num_classes));
        for (Eigen::Index col = 0; col < c.output.weight.cols(); ++col)
            for (Eigen::Index row = 0; row < c.output.weight.rows(); ++row)
                c.output.weight(row, col) = (2.0 * rng.next_double() - 1.0) * a;
    }
    c.output.bias = Eigen::VectorXd::Zero(cfg.num_classes);
    return c;
}

Eigen::MatrixXd classifier_forward(const Eigen::MatrixXd& features, Classifier& c, Mode mode,
                                   ClassifierCache* cache) {
    if (features.cols() != c.config.in_dim)
        throw std::invalid_argument("classifier_forward: feature dimension mismatch");
    Eigen::MatrixXd cur = features;
    for (std::size_t l = 0; l < c.blocks.size(); ++l) {
        ForwardCache::EncLayerCache lc;
        cur = dense_bn_relu_forward(c.blocks[l], cur, mode, cache ? &lc : nullptr);
        if (cache) cache->blocks.push_back(std::move(lc));
    }
    if (cache) cache->output_in = cur;
    Eigen::MatrixXd logits = affine_rows(cur, c.output.weight, mode);
    logits.rowwise() += c.output.bias.transpose();
    return logits;
}

ClassifierGrads classifier_backward(const Classifier& c, const ClassifierCache& cache,
                                    const Eigen::MatrixXd& dlogits) {
    ClassifierGrads g;
    g.blocks.resize(c.blocks.size());
    g.output.weight = dlogits.transpose() * cache.output_in;
    g.output.bias = dlogits.colwise().sum();

    Eigen::MatrixXd dcur = dlogits * c.output.weight;
    for (int l = static_cast<int>(c.blocks.size()) - 1; l >= 0; --l)
        dcur = dense_bn_relu_backward(c.blocks[l], cache.blocks[l], dcur, g.blocks[l]);
    return g;
}

std::pair<double, Eigen::MatrixXd> cross_entropy_loss(const Eigen::MatrixXd& logits,
                                                      const std::vector<int>& labels) {
    const Eigen::Index b = logits.rows();
    if (static_cast<std::size_t>(b) != labels.size())
        throw std::invalid_argument("cross_entropy_loss: label count mismatch");

    Eigen::MatrixXd shifted = logits.colwise() - logits.rowwise().maxCoeff();
    Eigen::MatrixXd expd = shifted.array().exp();
    Eigen::VectorXd denom = expd.rowwise().sum();
    Eigen::MatrixXd softmax = expd.array().colwise() / denom.array();

    double loss = 0.0;
    Eigen::MatrixXd dlogits = softmax / static_cast<double>(b);
    for (Eigen::Index i = 0; i < b; ++i) {
        int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= logits.cols())
            throw std::invalid_argument("cross_entropy_loss: label out of range");
        loss -= std::log(std::max(softmax(i, label), 1e-300));
        dlogits(i, label) -= 1.0 / static_cast<double>(b);
    }
    return {loss / static_cast<double>(b), std::move(dlogits)};
}

ClassifierTrainResult train_classifier(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                       const std::vector<std::uint32_t>& rows,
                                       const ClassifierConfig& cfg, const TrainConfig& tcfg) {
    cfg.validate();
    tcfg.validate();
    if (rows.empty()) throw std::invalid_argument("train_classifier: no training rows");
    if (labels.size() != static_cast<std::size_t>(features.rows()))
        throw std::invalid_argument("train_classifier: label count mismatch");
    for (std::uint32_t r : rows) {
        if (static_cast<Eigen::Index>(r) >= features.rows())
            throw std::invalid_argument("train_classifier: row index out of range");
        if (labels[r] < 0 || labels[r] >= cfg.num_classes)
            throw std::invalid_argument("train_classifier: label out of range at row " + std::to_string(r));
    }

    ClassifierTrainResult result;
    result.classifier = init_classifier(cfg, tcfg.seed);

    AdamState state;
    for (const TensorView& view : trainable_views(result.classifier)) {
        state.m.emplace_back(Eigen::VectorXd::Zero(view.size()));
        state.v.emplace_back(Eigen::VectorXd::Zero(view.size()));
    }

    Rng rng(Rng::mix(tcfg.seed, 0xc7241ULL));
    std::vector<std::uint32_t> order = rows;
    std::vector<double> loss_history;
    double lr = tcfg.lr0;

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(tcfg.batch_size)) {
            std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(tcfg.batch_size));
            Eigen::Index bsz = static_cast<Eigen::Index>(end - at);
            Eigen::MatrixXd x(bsz, features.cols());
            std::vector<int> y(static_cast<std::size_t>(bsz));
            for (Eigen::Index i = 0; i < bsz; ++i) {
                x.row(i) = features.row(order[at + static_cast<std::size_t>(i)]);
                y[static_cast<std::size_t>(i)] = labels[order[at + static_cast<std::size_t>(i)]];
            }

            ClassifierCache cache;
            Eigen::MatrixXd logits = classifier_forward(x, result.classifier, Mode::Train, &cache);
            auto [loss, dlogits] = cross_entropy_loss(logits, y);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_classifier: non-finite loss at epoch " +
                                         std::to_string(epoch));
            loss_sum += loss * static_cast<double>(bsz);
            for (Eigen::Index i = 0; i < bsz; ++i) {
                Eigen::Index pred;
                logits.row(i).maxCoeff(&pred);
                if (static_cast<int>(pred) == y[static_cast<std::size_t>(i)]) ++correct;
            }

            ClassifierGrads grads = classifier_backward(result.classifier, cache, dlogits);
            adam_step(trainable_views(result.classifier), trainable_views(grads), state, lr);
        }

        ClassifierEpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_sum / static_cast<double>(order.size());
        entry.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        result.log.push_back(entry);

        loss_history.push_back(entry.train_loss);
        lr = lr_schedule(loss_history, tcfg);
    }
    return result;
}

ClassifierTrainResult train_classifier(const FeatureMatrix& features, const std::vector<int>& labels,
                                       const ClassifierConfig& cfg, const TrainConfig& tcfg) {
    std::vector<std::uint32_t> rows;
    for (std::uint32_t i = 0; i < features.valid.size(); ++i)
        if (features.valid[i]) rows.push_back(i);
    if (rows.empty()) throw std::invalid_argument("train_classifier: all feature rows are masked");
    return train_classifier(features.values, labels, rows, cfg, tcfg);
}

std::vector<int> classifier_predict(Classifier& c, const Eigen::MatrixXd& features,
                                    const std::vector<std::uint32_t>& rows, int batch_size) {
    std::vector<int> out(rows.size());
    for (std::size_t at = 0; at < rows.size(); at += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(rows.size(), at + static_cast<std::size_t>(batch_size));
        Eigen::Index bsz = static_cast<Eigen::Index>(end - at);
        Eigen::MatrixXd x(bsz, features.cols());
        for (Eigen::Index i = 0; i < bsz; ++i) x.row(i) = features.row(rows[at + static_cast<std::size_t>(i)]);
        Eigen::MatrixXd logits = classifier_forward(x, c, Mode::Eval);
        for (Eigen::Index i = 0; i < bsz; ++i) {
            Eigen::Index pred;
            logits.row(i).maxCoeff(&pred);
            out[at + static_cast<std::size_t>(i)] = static_cast<int>(pred);
        }
    }
    return out;
}

ConfusionMatrix::ConfusionMatrix(int num_classes) {
    counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_classes, num_classes);
}

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || truth >= counts.rows() || predicted < 0 || predicted >= counts.cols())
        throw std::invalid_argument("ConfusionMatrix: class out of range");
    ++counts(truth, predicted);
}

SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm) {
    const Eigen::Index c = cm.counts.rows();
    if (c == 0 || cm.total() == 0) throw std::invalid_argument("segmentation_metrics: empty matrix");

    SegmentationMetrics metrics;
    double iou_sum = 0.0, recall_sum = 0.0;
    int iou_classes = 0, recall_classes = 0;
    std::int64_t diag = 0;

    for (Eigen::Index i = 0; i < c; ++i) {
        std::int64_t tp = cm.counts(i, i);
        std::int64_t fn = cm.counts.row(i).sum() - tp;
        std::int64_t fp = cm.counts.col(i).sum() - tp;
        diag += tp;

        // classes absent from both ground truth and predictions have an
        // undefined (0/0) IoU and are left out of the mean
        if (tp + fp + fn > 0) {
            iou_sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
            ++iou_classes;
        }
        if (tp + fn > 0) {
            recall_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
            ++recall_classes;
        }
    }
    metrics.miou = iou_classes > 0 ? iou_sum / iou_classes : 0.0;
    metrics.macc = recall_classes > 0 ? recall_sum / recall_classes : 0.0;
    metrics.oa = static_cast<double>(diag) / static_cast<double>(cm.total());
    return metrics;
}

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                           int num_classes) {
    if (truth.size() != predicted.size())
        throw std::invalid_argument("confusion_from_predictions: size mismatch");
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

std::vector<std::uint32_t> stratified_subsample(const std::vector<int>& labels,
                                                const std::vector<std::uint32_t>& rows, double fraction,
                                                std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("stratified_subsample: fraction must be in (0, 1]");
    if (fraction == 1.0) return rows;

    int max_class = 0;
    for (std::uint32_t r : rows) max_class = std::max(max_class, labels[r]);
    std::vector<std::vector<std::uint32_t>> per_class(static_cast<std::size_t>(max_class) + 1);
    for (std::uint32_t r : rows) per_class[static_cast<std::size_t>(labels[r])].push_back(r);

    std::vector<std::uint32_t> out;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        auto& bucket = per_class[c];
        if (bucket.empty()) continue;
        std::size_t take = static_cast<std::size_t>(
            std::ceil(fraction * static_cast<double>(bucket.size()) - 1e-12));
        take = std::max<std::size_t>(1, std::min(take, bucket.size()));
        Rng rng(Rng::mix(seed, 0x57247ULL, c));
        rng.partial_shuffle(bucket, take);
        out.insert(out.end(), bucket.begin(), bucket.begin() + static_cast<long>(take));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_rows(
    const FeatureMatrix& features, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split_rows: test_fraction must be in (0, 1)");
    std::vector<std::uint32_t> valid_rows;
    for (std::uint32_t i = 0; i < features.valid.size(); ++i)
        if (features.valid[i]) valid_rows.push_back(i);
    if (valid_rows.size() < 2) throw std::invalid_argument("split_rows: not enough valid rows");

    Rng rng(Rng::mix(seed, 0x5211aULL));
    rng.shuffle(valid_rows);
    std::size_t n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(valid_rows.size()))));
    std::vector<std::uint32_t> test(valid_rows.begin(), valid_rows.begin() + static_cast<long>(n_test));
    std::vector<std::uint32_t> train(valid_rows.begin() + static_cast<long>(n_test), valid_rows.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {std::move(train), std::move(test)};
}

std::vector<LabelFractionRow> label_fraction_study(const Eigen::MatrixXd& features,
                                                   const std::vector<int>& labels,
                                                   const std::vector<std::uint32_t>& train_rows,
                                                   const std::vector<std::uint32_t>& test_rows,
                                                   const std::vector<double>& fractions,
                                                   const ClassifierConfig& cfg, const TrainConfig& tcfg) {
    if (train_rows.empty() || test_rows.empty())
        throw std::invalid_argument("label_fraction_study: empty split");

    // every class present anywhere must survive subsampling on the train side
    std::vector<std::int64_t> train_count(static_cast<std::size_t>(cfg.num_classes), 0);
    std::vector<std::int64_t> any_count(static_cast<std::size_t>(cfg.num_classes), 0);
    for (std::uint32_t r : train_rows) ++train_count[static_cast<std::size_t>(labels[r])];
    for (std::uint32_t r : test_rows) ++any_count[static_cast<std::size_t>(labels[r])];
    for (int c = 0; c < cfg.num_classes; ++c)
        if (any_count[static_cast<std::size_t>(c)] > 0 && train_count[static_cast<std::size_t>(c)] == 0)
            throw std::runtime_error("label_fraction_study: class " + std::to_string(c) +
                                     " has zero training rows");

    std::vector<int> truth;
    truth.reserve(test_rows.size());
    for (std::uint32_t r : test_rows) truth.push_back(labels[r]);

    std::vector<LabelFractionRow> table;
    for (double fraction : fractions) {
        std::vector<std::uint32_t> sub = stratified_subsample(labels, train_rows, fraction, tcfg.seed);
        ClassifierTrainResult trained = train_classifier(features, labels, sub, cfg, tcfg);
        std::vector<int> predicted = classifier_predict(trained.classifier, features, test_rows);
        SegmentationMetrics metrics =
            segmentation_metrics(confusion_from_predictions(truth, predicted, cfg.num_classes));
        table.push_back({fraction, metrics.miou, sub.size()});
    }
    return table;
}

}  // namespace mortonnet
