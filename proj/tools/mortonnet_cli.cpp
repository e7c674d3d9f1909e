// Command-line driver for the full pipeline: synthetic clouds, sequence
// datasets, self-supervised training, feature extraction, the downstream
// part classifier, and the ordering / label-fraction studies.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mortonnet/datagen.hpp"
#include "mortonnet/downstream.hpp"
#include "mortonnet/features.hpp"
#include "mortonnet/io.hpp"
#include "mortonnet/model.hpp"
#include "mortonnet/morton.hpp"
#include "mortonnet/neighborhood.hpp"
#include "mortonnet/sequence.hpp"
#include "mortonnet/train.hpp"

namespace {

using namespace mortonnet;

std::string g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string g6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

OrderingScheme make_scheme(const std::string& name, std::uint64_t seed) {
    OrderingScheme scheme;
    scheme.kind = ordering_from_name(name);
    scheme.seed = seed;
    return scheme;
}

DatasetFile build_dataset(const PointCloud& cloud, const SequenceGenConfig& gen, int bits) {
    QuantSpec spec{bits, compute_bbox(cloud)};
    SpatialIndex index(cloud, SpatialIndex::default_cell_size(cloud));
    SequenceSet set = generate_sequences(cloud, gen, index, spec);

    DatasetFile out;
    out.gen = gen;
    out.bits_per_axis = bits;
    out.samples = normalize_all(cloud, set.sequences);
    out.skipped_points.assign(set.skipped_points.begin(), set.skipped_points.end());
    return out;
}

Checkpoint run_training(const DatasetFile& dataset, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const std::string& out_path, int save_every, const Checkpoint* resume,
                        bool quiet = false) {
    auto [train_set, val_set] = split_train_val(dataset.samples, tcfg);
    Model model = resume ? resume->model : init_model(mcfg);

    auto on_epoch = [&](const Checkpoint& state) {
        const EpochLog& e = state.log.back();
        if (!quiet)
            std::cout << "epoch " << e.epoch << "  train " << g6(e.train_loss) << "  val "
                      << g6(e.val_loss) << "  lr " << g6(e.lr) << "  val_rho_acc " << g6(e.val_rho_acc)
                      << "\n";
        if (save_every > 0 && !out_path.empty() && state.epoch % save_every == 0)
            save_checkpoint(out_path, state);
    };
    Checkpoint final_state = train_loop(train_set, val_set, model, tcfg, resume, on_epoch);
    if (!out_path.empty()) save_checkpoint(out_path, final_state);
    return final_state;
}

std::vector<std::string> gen_config_echo(const SequenceGenConfig& gen, int bits) {
    return {std::string("scheme=") + ordering_name(gen.scheme.kind), "k=" + std::to_string(gen.k),
            "m=" + std::to_string(gen.m), "seed=" + std::to_string(gen.seed),
            "bits=" + std::to_string(bits)};
}

int run(int argc, char** argv) {
    CLI::App app{"Self-supervised point-cloud features from space-filling-curve sequences"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI/TOML file");

    // ---- gen ----------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic labeled point cloud");
    std::string gen_shape = "sphere", gen_out;
    std::size_t gen_n = 2000;
    double gen_noise = 0.0;
    std::uint64_t gen_seed = 0;
    gen_cmd->add_option("--shape", gen_shape, "plane|sphere|cylinder|box|torus|composite");
    gen_cmd->add_option("-n,--points", gen_n, "Number of points")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--noise", gen_noise, "Normal-direction noise sigma")->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--seed", gen_seed, "RNG seed");
    gen_cmd->add_option("-o,--output", gen_out, "Output .xyz path")->required();

    // ---- sequences ----------------------------------------------------
    auto* seq_cmd = app.add_subcommand("sequences", "Generate a sequence dataset from a cloud");
    std::string seq_in, seq_out, seq_scheme = "morton";
    int seq_k = 16, seq_m = 5, seq_bits = 16;
    std::uint64_t seq_seed = 0;
    seq_cmd->add_option("-i,--input", seq_in, "Input .xyz cloud")->required();
    seq_cmd->add_option("-o,--output", seq_out, "Output dataset (.mseq)")->required();
    seq_cmd->add_option("-k", seq_k, "Sequence length (default 16)");
    seq_cmd->add_option("-m", seq_m, "Sequences per point (default 5)");
    seq_cmd->add_option("--scheme", seq_scheme, "morton|coord-x|coord-y|coord-z|random");
    seq_cmd->add_option("--bits", seq_bits, "Quantization bits per axis")->check(CLI::Range(1, 21));
    seq_cmd->add_option("--seed", seq_seed, "RNG seed");

    // ---- train --------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train the next-point regressor on a dataset");
    std::string train_in, train_out, train_log, train_resume;
    ModelConfig mcfg;
    mcfg.enc_layers = 2;
    mcfg.enc_width = 64;
    mcfg.gru_layers = 3;
    mcfg.hidden = 200;
    TrainConfig tcfg;
    int save_every = 0;
    std::uint64_t train_seed = 0;
    train_cmd->add_option("-i,--input", train_in, "Input dataset (.mseq)")->required();
    train_cmd->add_option("-o,--output", train_out, "Output checkpoint (.mseq)")->required();
    train_cmd->add_option("--log", train_log, "Per-epoch CSV log path");
    train_cmd->add_option("--resume", train_resume, "Checkpoint to resume from");
    train_cmd->add_option("--enc-layers", mcfg.enc_layers);
    train_cmd->add_option("--enc-width", mcfg.enc_width);
    train_cmd->add_option("--gru-layers", mcfg.gru_layers);
    train_cmd->add_option("--hidden", mcfg.hidden);
    train_cmd->add_option("--epochs", tcfg.epochs);
    train_cmd->add_option("--lr0", tcfg.lr0);
    train_cmd->add_option("--decay", tcfg.decay);
    train_cmd->add_option("--patience", tcfg.patience);
    train_cmd->add_option("--batch-size", tcfg.batch_size);
    train_cmd->add_option("--val-fraction", tcfg.val_fraction);
    train_cmd->add_option("--rho", tcfg.rho);
    train_cmd->add_option("--save-every", save_every, "Write the checkpoint every N epochs");
    train_cmd->add_option("--seed", train_seed, "RNG seed");

    // ---- eval ---------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint's rho-ball accuracy");
    std::string eval_ckpt, eval_data;
    double eval_rho = 0.02;
    bool eval_last = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--data", eval_data, "Dataset (.mseq)")->required();
    eval_cmd->add_option("--rho", eval_rho);
    eval_cmd->add_flag("--last", eval_last, "Use the last-epoch model instead of the best one");

    // ---- extract ------------------------------------------------------
    auto* extract_cmd = app.add_subcommand("extract", "Extract per-point features with a checkpoint");
    std::string ex_ckpt, ex_in, ex_out, ex_scheme = "morton";
    int ex_m = 5, ex_bits = 16, ex_threads = 1;
    std::uint64_t ex_seed = 0;
    extract_cmd->add_option("--checkpoint", ex_ckpt)->required();
    extract_cmd->add_option("-i,--input", ex_in, "Input .xyz cloud")->required();
    extract_cmd->add_option("-o,--output", ex_out, "Output feature container")->required();
    extract_cmd->add_option("-m", ex_m, "Sequences per point");
    extract_cmd->add_option("--scheme", ex_scheme);
    extract_cmd->add_option("--bits", ex_bits)->check(CLI::Range(1, 21));
    extract_cmd->add_option("--threads", ex_threads)->check(CLI::PositiveNumber);
    extract_cmd->add_option("--seed", ex_seed, "RNG seed");

    // ---- classify -----------------------------------------------------
    auto* cls_cmd = app.add_subcommand("classify", "Train/evaluate the part classifier on features");
    std::string cls_features, cls_cloud, cls_metrics, cls_confusion;
    double cls_test_fraction = 0.2;
    TrainConfig cls_tcfg;
    cls_tcfg.epochs = 60;
    std::uint64_t cls_seed = 0;
    cls_cmd->add_option("--features", cls_features, "Feature container")->required();
    cls_cmd->add_option("-i,--input", cls_cloud, "Labeled .xyz cloud")->required();
    cls_cmd->add_option("--metrics", cls_metrics, "Metrics CSV output path");
    cls_cmd->add_option("--confusion", cls_confusion, "Confusion-matrix CSV output path");
    cls_cmd->add_option("--test-fraction", cls_test_fraction);
    cls_cmd->add_option("--epochs", cls_tcfg.epochs);
    cls_cmd->add_option("--lr0", cls_tcfg.lr0);
    cls_cmd->add_option("--batch-size", cls_tcfg.batch_size);
    cls_cmd->add_option("--seed", cls_seed, "RNG seed");

    // ---- ablate-order -------------------------------------------------
    auto* abl_cmd = app.add_subcommand("ablate-order",
                                       "Train one model per ordering scheme at matched budget");
    std::string abl_train, abl_eval, abl_out;
    int abl_k = 16, abl_m = 5, abl_bits = 16, abl_epochs = 20;
    int abl_hidden = 32, abl_enc_width = 32, abl_enc_layers = 2, abl_gru_layers = 3;
    double abl_rho = 0.02;
    std::uint64_t abl_seed = 0;
    abl_cmd->add_option("-i,--train-cloud", abl_train, "Training .xyz cloud")->required();
    abl_cmd->add_option("--eval-cloud", abl_eval, "Held-out .xyz cloud")->required();
    abl_cmd->add_option("-o,--output", abl_out, "Comparison table CSV");
    abl_cmd->add_option("-k", abl_k);
    abl_cmd->add_option("-m", abl_m);
    abl_cmd->add_option("--bits", abl_bits)->check(CLI::Range(1, 21));
    abl_cmd->add_option("--epochs", abl_epochs);
    abl_cmd->add_option("--hidden", abl_hidden);
    abl_cmd->add_option("--enc-width", abl_enc_width);
    abl_cmd->add_option("--enc-layers", abl_enc_layers);
    abl_cmd->add_option("--gru-layers", abl_gru_layers);
    abl_cmd->add_option("--rho", abl_rho);
    abl_cmd->add_option("--seed", abl_seed, "RNG seed");

    // ---- label-study --------------------------------------------------
    auto* lbl_cmd = app.add_subcommand("label-study",
                                       "Classifier mIoU as a function of the labeled fraction");
    std::string lbl_features, lbl_cloud, lbl_out;
    std::vector<double> lbl_fractions{0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
    double lbl_test_fraction = 0.2;
    TrainConfig lbl_tcfg;
    lbl_tcfg.epochs = 60;
    std::uint64_t lbl_seed = 0;
    lbl_cmd->add_option("--features", lbl_features, "Feature container")->required();
    lbl_cmd->add_option("-i,--input", lbl_cloud, "Labeled .xyz cloud")->required();
    lbl_cmd->add_option("-o,--output", lbl_out, "Output CSV");
    lbl_cmd->add_option("--fractions", lbl_fractions, "Label fractions in (0,1]");
    lbl_cmd->add_option("--test-fraction", lbl_test_fraction);
    lbl_cmd->add_option("--epochs", lbl_tcfg.epochs);
    lbl_cmd->add_option("--seed", lbl_seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    if (gen_cmd->parsed()) {
        ShapeSpec spec{shape_from_name(gen_shape), gen_n, gen_noise, gen_seed};
        GeneratedCloud generated = generate_shape(spec);
        write_xyz(gen_out, generated.cloud,
                  {std::string("shape=") + shape_name(spec.kind), "n=" + std::to_string(spec.n_points),
                   "noise=" + g17(spec.noise_sigma), "seed=" + std::to_string(spec.seed),
                   "parts=" + std::to_string(generated.num_parts)});
        std::cout << "wrote " << generated.cloud.size() << " points to " << gen_out << "\n";
        return 0;
    }

    if (seq_cmd->parsed()) {
        PointCloud cloud = read_xyz(seq_in);
        SequenceGenConfig gen{seq_k, seq_m, make_scheme(seq_scheme, seq_seed), seq_seed};
        DatasetFile dataset = build_dataset(cloud, gen, seq_bits);
        save_dataset(seq_out, dataset);
        std::cout << "wrote " << dataset.samples.size() << " sequences (" << dataset.skipped_points.size()
                  << " points skipped) to " << seq_out << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        DatasetFile dataset = load_dataset(train_in);
        mcfg.k = dataset.gen.k;
        mcfg.init_seed = train_seed;
        tcfg.seed = train_seed;

        Checkpoint resume_state;
        const Checkpoint* resume = nullptr;
        if (!train_resume.empty()) {
            resume_state = load_checkpoint(train_resume);
            if (resume_state.model.config.k != dataset.gen.k)
                throw std::runtime_error("train: checkpoint k does not match dataset k");
            resume = &resume_state;
        }
        Checkpoint final_state = run_training(dataset, mcfg, tcfg, train_out, save_every, resume);
        if (!train_log.empty())
            write_train_log_csv(train_log, final_state.log,
                                {std::string("dataset=") + train_in, "seed=" + std::to_string(train_seed)});
        std::cout << "best epoch " << final_state.best_epoch << "  best val loss "
                  << g6(final_state.best_val_loss) << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        Checkpoint ckpt = load_checkpoint(eval_ckpt);
        DatasetFile dataset = load_dataset(eval_data);
        Model& model = eval_last ? ckpt.model : ckpt.best_model;
        if (model.config.k != dataset.gen.k)
            throw std::runtime_error("eval: checkpoint k does not match dataset k");
        double acc = eval_accuracy(model, dataset.samples, eval_rho);
        std::cout << "rho_accuracy " << g17(acc) << "\n";
        return 0;
    }

    if (extract_cmd->parsed()) {
        Checkpoint ckpt = load_checkpoint(ex_ckpt);
        PointCloud cloud = read_xyz(ex_in);
        SequenceGenConfig gen{ckpt.best_model.config.k, ex_m, make_scheme(ex_scheme, ex_seed), ex_seed};
        QuantSpec spec{ex_bits, compute_bbox(cloud)};
        SpatialIndex index(cloud, SpatialIndex::default_cell_size(cloud));
        FeatureMatrix features = extract_features(ckpt.best_model, cloud, gen, index, spec, ex_threads);

        FeatureFile file{std::move(features), gen, ex_bits, ckpt.best_model.config.hidden};
        save_features(ex_out, file);
        std::cout << "wrote " << file.features.values.rows() << "x" << file.features.values.cols()
                  << " features (" << (file.features.valid.size() - file.features.count_valid())
                  << " masked) to " << ex_out << "\n";
        return 0;
    }

    if (cls_cmd->parsed()) {
        FeatureFile file = load_features(cls_features);
        PointCloud cloud = read_xyz(cls_cloud);
        if (!cloud.has_labels()) throw std::runtime_error("classify: cloud has no labels");
        if (cloud.size() != static_cast<std::size_t>(file.features.values.rows()))
            throw std::runtime_error("classify: cloud size does not match feature rows");

        int num_classes = 1 + *std::max_element(cloud.labels.begin(), cloud.labels.end());
        ClassifierConfig ccfg{static_cast<int>(file.features.values.cols()), num_classes};
        cls_tcfg.seed = cls_seed;

        auto [train_rows, test_rows] = split_rows(file.features, cls_test_fraction, cls_seed);
        ClassifierTrainResult trained =
            train_classifier(file.features.values, cloud.labels, train_rows, ccfg, cls_tcfg);
        std::vector<int> predicted = classifier_predict(trained.classifier, file.features.values, test_rows);
        std::vector<int> truth;
        for (std::uint32_t r : test_rows) truth.push_back(cloud.labels[r]);
        ConfusionMatrix cm = confusion_from_predictions(truth, predicted, num_classes);
        SegmentationMetrics metrics = segmentation_metrics(cm);

        std::cout << "test points " << test_rows.size() << "\nmIoU " << g6(metrics.miou) << "\nmAcc "
                  << g6(metrics.macc) << "\nOA   " << g6(metrics.oa) << "\n";
        if (!cls_metrics.empty()) {
            std::ofstream out(cls_metrics + ".tmp", std::ios::trunc);
            out << "miou,macc,oa\n"
                << g17(metrics.miou) << ',' << g17(metrics.macc) << ',' << g17(metrics.oa) << "\n";
            out.close();
            std::filesystem::rename(cls_metrics + ".tmp", cls_metrics);
        }
        if (!cls_confusion.empty()) {
            std::ofstream out(cls_confusion + ".tmp", std::ios::trunc);
            for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
                for (Eigen::Index c = 0; c < cm.counts.cols(); ++c)
                    out << cm.counts(r, c) << (c + 1 < cm.counts.cols() ? "," : "");
                out << "\n";
            }
            out.close();
            std::filesystem::rename(cls_confusion + ".tmp", cls_confusion);
        }
        return 0;
    }

    if (abl_cmd->parsed()) {
        PointCloud train_cloud = read_xyz(abl_train);
        PointCloud eval_cloud = read_xyz(abl_eval);

        struct Row {
            std::string scheme;
            double accuracy;
        };
        std::vector<Row> rows;
        for (const std::string& scheme_name :
             {std::string("morton"), std::string("random"), std::string("coord-x"),
              std::string("coord-y"), std::string("coord-z")}) {
            SequenceGenConfig gen{abl_k, abl_m, make_scheme(scheme_name, abl_seed), abl_seed};
            DatasetFile train_data = build_dataset(train_cloud, gen, abl_bits);
            DatasetFile eval_data = build_dataset(eval_cloud, gen, abl_bits);

            ModelConfig model_cfg{abl_k, abl_enc_layers, abl_enc_width, abl_gru_layers, abl_hidden,
                                  abl_seed};
            TrainConfig train_cfg;
            train_cfg.epochs = abl_epochs;
            train_cfg.rho = abl_rho;
            train_cfg.seed = abl_seed;

            Checkpoint ckpt = run_training(train_data, model_cfg, train_cfg, "", 0, nullptr, true);
            double acc = eval_accuracy(ckpt.best_model, eval_data.samples, abl_rho);
            rows.push_back({scheme_name, acc});
            std::cout << scheme_name << " held-out rho_accuracy " << g6(acc) << "\n";
        }
        if (!abl_out.empty()) {
            std::ofstream out(abl_out + ".tmp", std::ios::trunc);
            out << "scheme,rho_accuracy\n";
            for (const Row& r : rows) out << r.scheme << ',' << g17(r.accuracy) << "\n";
            out.close();
            std::filesystem::rename(abl_out + ".tmp", abl_out);
        }
        return 0;
    }

    if (lbl_cmd->parsed()) {
        FeatureFile file = load_features(lbl_features);
        PointCloud cloud = read_xyz(lbl_cloud);
        if (!cloud.has_labels()) throw std::runtime_error("label-study: cloud has no labels");
        if (cloud.size() != static_cast<std::size_t>(file.features.values.rows()))
            throw std::runtime_error("label-study: cloud size does not match feature rows");

        int num_classes = 1 + *std::max_element(cloud.labels.begin(), cloud.labels.end());
        ClassifierConfig ccfg{static_cast<int>(file.features.values.cols()), num_classes};
        lbl_tcfg.seed = lbl_seed;

        auto [train_rows, test_rows] = split_rows(file.features, lbl_test_fraction, lbl_seed);
        std::vector<LabelFractionRow> table = label_fraction_study(
            file.features.values, cloud.labels, train_rows, test_rows, lbl_fractions, ccfg, lbl_tcfg);

        for (const LabelFractionRow& row : table)
            std::cout << "fraction " << g6(row.fraction) << "  train_rows " << row.train_rows << "  mIoU "
                      << g6(row.miou) << "\n";
        if (!lbl_out.empty()) {
            std::ofstream out(lbl_out + ".tmp", std::ios::trunc);
            out << "fraction,train_rows,miou\n";
            for (const LabelFractionRow& row : table)
                out << g17(row.fraction) << ',' << row.train_rows << ',' << g17(row.miou) << "\n";
            out.close();
            std::filesystem::rename(lbl_out + ".tmp", lbl_out);
        }
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
