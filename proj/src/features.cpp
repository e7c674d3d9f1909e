#include "mortonnet/features.hpp"

#include <mutex>
#include <stdexcept>
#include <thread>

namespace mortonnet {

std::size_t FeatureMatrix::count_valid() const {
    std::size_t n = 0;
    for (std::uint8_t v : valid) n += v ? 1 : 0;
    return n;
}

Eigen::VectorXd pool_states(const Eigen::MatrixXd& states) {
    if (states.rows() < 1) throw std::invalid_argument("pool_states: empty input");
    return states.colwise().maxCoeff();
}

FeatureMatrix coordinate_features(const PointCloud& cloud, int dim) {
    if (dim < 3) throw std::invalid_argument("coordinate_features: dim must be >= 3");
    FeatureMatrix out;
    out.values.resize(static_cast<Eigen::Index>(cloud.size()), dim);
    out.valid.assign(cloud.size(), 1);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        for (int c = 0; c < dim; ++c)
            out.values(static_cast<Eigen::Index>(i), c) = cloud.points[i][c % 3];
    return out;
}

FeatureMatrix extract_features(const Model& model, const PointCloud& cloud,
                               const SequenceGenConfig& cfg, const SpatialIndex& index,
                               const QuantSpec& spec, int n_threads) {
    if (cfg.k != model.config.k)
        throw std::invalid_argument("extract_features: sequence k does not match the model's k");
    if (n_threads < 1) throw std::invalid_argument("extract_features: n_threads must be >= 1");
    if (cfg.k < 3 || cfg.m < 1 || cloud.size() < 2)
        throw std::invalid_argument("extract_features: invalid generation config for this cloud");

    const std::vector<std::uint32_t> ranks = ordering_ranks(cloud, cfg.scheme, spec);
    const Eigen::Index hidden = model.config.hidden;
    const std::size_t n = cloud.size();

    FeatureMatrix out;
    out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), hidden);
    out.valid.assign(n, 0);

    auto work = [&](std::uint32_t begin, std::uint32_t end) {
        // eval-mode forward never mutates the model, so a shared copy per
        // thread scope is enough for const-correctness
        Model local = model;
        Eigen::MatrixXd x, states;
        for (std::uint32_t p = begin; p < end; ++p) {
            std::vector<ZSequence> seqs = sequences_for_point(cloud, cfg, index, ranks, p);
            if (seqs.empty()) continue;

            const Eigen::Index steps = cfg.k - 1;
            const Eigen::Index m = static_cast<Eigen::Index>(seqs.size());
            x.resize(steps * m, 3);
            for (Eigen::Index s = 0; s < m; ++s) {
                TrainingSample sample = normalize_sequence(cloud, seqs[static_cast<std::size_t>(s)]);
                for (Eigen::Index t = 0; t < steps; ++t) x.row(t * m + s) = sample.inputs.row(t);
            }
            Eigen::MatrixXd encoded = encoder_forward(x, local, Mode::Eval);
            states = gru_forward(encoded, m, local, Mode::Eval);
            out.values.row(p) = pool_states(states).transpose();
            out.valid[p] = 1;
        }
    };

    if (n_threads == 1 || n < 2) {
        work(0, static_cast<std::uint32_t>(n));
    } else {
        std::vector<std::thread> threads;
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::uint32_t chunk = static_cast<std::uint32_t>((n + n_threads - 1) / n_threads);
        for (int t = 0; t < n_threads; ++t) {
            std::uint32_t begin = static_cast<std::uint32_t>(t) * chunk;
            std::uint32_t end = std::min<std::uint32_t>(begin + chunk, static_cast<std::uint32_t>(n));
            if (begin >= end) break;
            threads.emplace_back([&, begin, end] {
                try {
                    work(begin, end);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (std::thread& th : threads) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    return out;
}

}  // namespace mortonnet
