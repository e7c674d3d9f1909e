#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mortonnet/rng.hpp"
#include "mortonnet/sequence.hpp"

namespace mortonnet {

struct ModelConfig {
    int k = 100;          // sequence length; the network consumes k-1 steps
    int enc_layers = 2;   // pointwise encoding layers
    int enc_width = 64;   // channels per encoding layer
    int gru_layers = 3;
    int hidden = 200;     // GRU state size; also the feature dimension
    std::uint64_t init_seed = 0;

    void validate() const;
};

enum class Mode { Train, Eval };

/// One pointwise encoding layer: linear map, batch norm over all
/// (batch x position) samples per channel, ReLU. The linear map carries no
/// bias: batch norm subtracts the per-channel mean right after, which would
/// cancel one exactly (and leave it with an identically zero gradient), so
/// beta is the only shift.
struct EncoderLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd gamma, beta;
    Eigen::VectorXd running_mean, running_var;  // eval-mode statistics
};

/// One GRU layer. Gates follow the reset-before-matmul formulation:
///   z = sigmoid(x Wz' + h Uz' + bz)
///   r = sigmoid(x Wr' + h Ur' + br)
///   hc = tanh(x Wh' + (r . h) Uh' + bh)
///   h' = (1 - z) . h + z . hc
struct GruLayer {
    Eigen::MatrixXd wz, wr, wh;  // hidden x in
    Eigen::MatrixXd uz, ur, uh;  // hidden x hidden
    Eigen::VectorXd bz, br, bh;
};

struct OutputHead {
    Eigen::MatrixXd weight;  // 3 x hidden
    Eigen::VectorXd bias;    // 3
};

struct Model {
    ModelConfig config;
    std::vector<EncoderLayer> encoder;
    std::vector<GruLayer> gru;
    OutputHead head;
};

/// Shape-matched gradients for every trainable tensor of a Model (batch-norm
/// running statistics are buffers, not parameters, and have no gradient).
struct EncoderLayerGrad {
    Eigen::MatrixXd weight;
    Eigen::VectorXd gamma, beta;
};

struct GradientSet {
    std::vector<EncoderLayerGrad> encoder;
    std::vector<GruLayer> gru;
    OutputHead head;

    static GradientSet zeros_like(const Model& model);
    GradientSet& operator+=(const GradientSet& other);
    GradientSet& operator*=(double s);
};

/// Named view of one tensor's storage; model and gradient views come back in
/// the same fixed order so optimizers and serializers can zip them.
struct TensorView {
    std::string name;
    double* data = nullptr;
    Eigen::Index rows = 0, cols = 0;
    Eigen::Index size() const { return rows * cols; }
};

std::vector<TensorView> trainable_views(Model& model);
std::vector<TensorView> trainable_views(GradientSet& grads);
std::vector<TensorView> buffer_views(Model& model);  // BN running stats

inline std::vector<TensorView> trainable_views(const Model& m) {
    return trainable_views(const_cast<Model&>(m));
}
inline std::vector<TensorView> buffer_views(const Model& m) {
    return buffer_views(const_cast<Model&>(m));
}

/// Everything backward needs from a train-mode forward pass.
struct ForwardCache {
    Mode mode = Mode::Train;
    Eigen::Index batch = 0, steps = 0;

    struct EncLayerCache {
        Eigen::MatrixXd input;    // N x in
        Eigen::MatrixXd xhat;     // normalized pre-scale activations
        Eigen::VectorXd inv_std;  // per channel
        Eigen::MatrixXd bn_out;   // pre-ReLU
    };
    std::vector<EncLayerCache> enc;
    Eigen::MatrixXd enc_out;  // (steps*batch) x enc_width, time-major

    struct GruLayerCache {
        std::vector<Eigen::MatrixXd> z, r, hc, h;  // one B x hidden matrix per step
    };
    std::vector<GruLayerCache> gru;
    Eigen::MatrixXd final_h;  // B x hidden
};

/// Glorot-uniform weights, zero biases, identity batch norm. Deterministic in
/// cfg.init_seed.
Model init_model(const ModelConfig& cfg);

EncoderLayer init_dense_bn_layer(Eigen::Index out, Eigen::Index in, Rng& rng);

/// affine -> batch norm -> ReLU over rows of x (train mode normalizes with
/// batch statistics and updates the running ones; eval mode uses the running
/// statistics only). Shared by the encoder stack and the downstream
/// classifier blocks.
Eigen::MatrixXd dense_bn_relu_forward(EncoderLayer& layer, const Eigen::MatrixXd& x, Mode mode,
                                      ForwardCache::EncLayerCache* cache);

/// Reverse of dense_bn_relu_forward through ReLU, train-mode batch norm and
/// the affine map. Returns dL/dx and fills `grad`.
Eigen::MatrixXd dense_bn_relu_backward(const EncoderLayer& layer,
                                       const ForwardCache::EncLayerCache& cache,
                                       const Eigen::MatrixXd& dout, EncoderLayerGrad& grad);

/// x is time-major: row t*batch + b holds step t of batch element b.
Eigen::MatrixXd encoder_forward(const Eigen::MatrixXd& x, Model& model, Mode mode,
                                ForwardCache* cache = nullptr);

/// Runs the stacked GRU over encoded steps; returns the top layer's final
/// state (B x hidden). Eval mode selects the batch-equivariant product
/// kernel (see mm below); the recurrence itself is mode-free.
Eigen::MatrixXd gru_forward(const Eigen::MatrixXd& encoded, Eigen::Index batch, Model& model,
                            Mode mode = Mode::Eval, ForwardCache* cache = nullptr);

Eigen::MatrixXd head_forward(const Eigen::MatrixXd& h, const Model& model, Mode mode = Mode::Eval);

/// x * w^T with a mode-dependent kernel. Train mode uses the fast blocked
/// product; eval mode uses a coefficient-wise product whose accumulation
/// order depends only on the inner dimension, making every output row
/// bit-independent of which other rows share the batch.
Eigen::MatrixXd affine_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, Mode mode);

/// Full pipeline: encoder -> GRU -> head. In train mode the cache retains
/// every intermediate backward needs and BN running stats are updated.
Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Eigen::Index batch, Model& model, Mode mode,
                        ForwardCache* cache = nullptr);

/// Exact reverse-mode gradients, including BPTT through every GRU layer and
/// train-mode batch norm. `dy` is dL/dy, B x 3.
GradientSet backward(const Model& model, const ForwardCache& cache, const Eigen::MatrixXd& dy);

/// Pack samples [from, to) into a time-major input matrix and target matrix.
void pack_batch(const std::vector<TrainingSample>& samples, const std::vector<std::uint32_t>& order,
                std::size_t from, std::size_t to, Eigen::MatrixXd& x, Eigen::MatrixXd& targets);

}  // namespace mortonnet
