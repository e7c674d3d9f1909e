#include "mortonnet/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mortonnet/rng.hpp"

namespace mortonnet {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

Eigen::ArrayXXd sigmoid(const Eigen::MatrixXd& a) {
    return 1.0 / (1.0 + (-a.array()).exp());
}

void glorot_fill(Eigen::MatrixXd& w, Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index col = 0; col < w.cols(); ++col)
        for (Eigen::Index row = 0; row < w.rows(); ++row)
            w(row, col) = (2.0 * rng.next_double() - 1.0) * a;
}

}  // namespace

void ModelConfig::validate() const {
    if (k < 3) throw std::invalid_argument("ModelConfig: k must be >= 3");
    if (enc_layers < 1 || enc_width < 1 || gru_layers < 1 || hidden < 1)
        throw std::invalid_argument("ModelConfig: all dimensions must be positive");
}

EncoderLayer init_dense_bn_layer(Eigen::Index out, Eigen::Index in, Rng& rng) {
    EncoderLayer layer;
    layer.weight.resize(out, in);
    glorot_fill(layer.weight, out, in, rng);
    layer.gamma = Eigen::VectorXd::Ones(out);
    layer.beta = Eigen::VectorXd::Zero(out);
    layer.running_mean = Eigen::VectorXd::Zero(out);
    layer.running_var = Eigen::VectorXd::Ones(out);
    return layer;
}

Model init_model(const ModelConfig& cfg) {
    cfg.validate();
    Model model;
    model.config = cfg;
    Rng rng(Rng::mix(cfg.init_seed, 0x1417ULL));

    for (int l = 0; l < cfg.enc_layers; ++l)
        model.encoder.push_back(init_dense_bn_layer(cfg.enc_width, l == 0 ? 3 : cfg.enc_width, rng));

    for (int l = 0; l < cfg.gru_layers; ++l) {
        GruLayer layer;
        Eigen::Index in = (l == 0) ? cfg.enc_width : cfg.hidden;
        for (Eigen::MatrixXd* w : {&layer.wz, &layer.wr, &layer.wh}) {
            w->resize(cfg.hidden, in);
            glorot_fill(*w, cfg.hidden, in, rng);
        }
        for (Eigen::MatrixXd* u : {&layer.uz, &layer.ur, &layer.uh}) {
            u->resize(cfg.hidden, cfg.hidden);
            glorot_fill(*u, cfg.hidden, cfg.hidden, rng);
        }
        layer.bz = Eigen::VectorXd::Zero(cfg.hidden);
        layer.br = Eigen::VectorXd::Zero(cfg.hidden);
        layer.bh = Eigen::VectorXd::Zero(cfg.hidden);
        model.gru.push_back(std::move(layer));
    }

    model.head.weight.resize(3, cfg.hidden);
    glorot_fill(model.head.weight, 3, cfg.hidden, rng);
    model.head.bias = Eigen::VectorXd::Zero(3);
    return model;
}

GradientSet GradientSet::zeros_like(const Model& model) {
    GradientSet g;
    for (const EncoderLayer& layer : model.encoder) {
        EncoderLayerGrad eg;
        eg.weight = Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols());
        eg.gamma = Eigen::VectorXd::Zero(layer.gamma.size());
        eg.beta = Eigen::VectorXd::Zero(layer.beta.size());
        g.encoder.push_back(std::move(eg));
    }
    for (const GruLayer& layer : model.gru) {
        GruLayer lg;
        lg.wz = Eigen::MatrixXd::Zero(layer.wz.rows(), layer.wz.cols());
        lg.wr = Eigen::MatrixXd::Zero(layer.wr.rows(), layer.wr.cols());
        lg.wh = Eigen::MatrixXd::Zero(layer.wh.rows(), layer.wh.cols());
        lg.uz = Eigen::MatrixXd::Zero(layer.uz.rows(), layer.uz.cols());
        lg.ur = Eigen::MatrixXd::Zero(layer.ur.rows(), layer.ur.cols());
        lg.uh = Eigen::MatrixXd::Zero(layer.uh.rows(), layer.uh.cols());
        lg.bz = Eigen::VectorXd::Zero(layer.bz.size());
        lg.br = Eigen::VectorXd::Zero(layer.br.size());
        lg.bh = Eigen::VectorXd::Zero(layer.bh.size());
        g.gru.push_back(std::move(lg));
    }
    g.head.weight = Eigen::MatrixXd::Zero(model.head.weight.rows(), model.head.weight.cols());
    g.head.bias = Eigen::VectorXd::Zero(model.head.bias.size());
    return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        encoder[l].weight += other.encoder[l].weight;
        encoder[l].gamma += other.encoder[l].gamma;
        encoder[l].beta += other.encoder[l].beta;
    }
    for (std::size_t l = 0; l < gru.size(); ++l) {
        gru[l].wz += other.gru[l].wz;
        gru[l].wr += other.gru[l].wr;
        gru[l].wh += other.gru[l].wh;
        gru[l].uz += other.gru[l].uz;
        gru[l].ur += other.gru[l].ur;
        gru[l].uh += other.gru[l].uh;
        gru[l].bz += other.gru[l].bz;
        gru[l].br += other.gru[l].br;
        gru[l].bh += other.gru[l].bh;
    }
    head.weight += other.head.weight;
    head.bias += other.head.bias;
    return *this;
}

GradientSet& GradientSet::operator*=(double s) {
    for (TensorView& v : trainable_views(*this))
        Eigen::Map<Eigen::ArrayXd>(v.data, v.size()) *= s;
    return *this;
}

namespace {

template <class Enc, class Gru, class Head, class Out>
void collect(Enc& encoder, Gru& gru, Head& head, Out& out) {
    auto add = [&out](const std::string& name, auto& tensor) {
        out.push_back(TensorView{name, tensor.data(), tensor.rows(), tensor.cols()});
    };
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        std::string p = "enc" + std::to_string(l) + "/";
        add(p + "weight", encoder[l].weight);
        add(p + "gamma", encoder[l].gamma);
        add(p + "beta", encoder[l].beta);
    }
    for (std::size_t l = 0; l < gru.size(); ++l) {
        std::string p = "gru" + std::to_string(l) + "/";
        add(p + "wz", gru[l].wz);
        add(p + "wr", gru[l].wr);
        add(p + "wh", gru[l].wh);
        add(p + "uz", gru[l].uz);
        add(p + "ur", gru[l].ur);
        add(p + "uh", gru[l].uh);
        add(p + "bz", gru[l].bz);
        add(p + "br", gru[l].br);
        add(p + "bh", gru[l].bh);
    }
    add("head/weight", head.weight);
    add("head/bias", head.bias);
}

}  // namespace

std::vector<TensorView> trainable_views(Model& model) {
    std::vector<TensorView> out;
    collect(model.encoder, model.gru, model.head, out);
    return out;
}

std::vector<TensorView> trainable_views(GradientSet& grads) {
    std::vector<TensorView> out;
    collect(grads.encoder, grads.gru, grads.head, out);
    return out;
}

std::vector<TensorView> buffer_views(Model& model) {
    std::vector<TensorView> out;
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        std::string p = "enc" + std::to_string(l) + "/";
        EncoderLayer& layer = model.encoder[l];
        out.push_back(TensorView{p + "running_mean", layer.running_mean.data(), layer.running_mean.rows(), 1});
        out.push_back(TensorView{p + "running_var", layer.running_var.data(), layer.running_var.rows(), 1});
    }
    return out;
}

Eigen::MatrixXd affine_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, Mode mode) {
    if (mode == Mode::Eval) return x.lazyProduct(w.transpose());
    return x * w.transpose();
}

Eigen::MatrixXd dense_bn_relu_forward(EncoderLayer& layer, const Eigen::MatrixXd& x, Mode mode,
                                      ForwardCache::EncLayerCache* cache) {
    if (layer.weight.cols() != x.cols()) throw std::invalid_argument("dense_bn_relu: shape mismatch");

    Eigen::MatrixXd a = affine_rows(x, layer.weight, mode);

    Eigen::VectorXd mean, inv_std;
    Eigen::MatrixXd xhat;
    if (mode == Mode::Train) {
        mean = a.colwise().mean();
        Eigen::MatrixXd centered = a.rowwise() - mean.transpose();
        Eigen::VectorXd var = centered.array().square().colwise().mean();
        inv_std = (var.array() + kBnEps).rsqrt();
        xhat = centered.array().rowwise() * inv_std.transpose().array();
        layer.running_mean = (1.0 - kBnMomentum) * layer.running_mean + kBnMomentum * mean;
        layer.running_var = (1.0 - kBnMomentum) * layer.running_var + kBnMomentum * var;
    } else {
        inv_std = (layer.running_var.array() + kBnEps).rsqrt();
        xhat = (a.rowwise() - layer.running_mean.transpose()).array().rowwise() *
               inv_std.transpose().array();
    }

    Eigen::MatrixXd bn = xhat.array().rowwise() * layer.gamma.transpose().array();
    bn.rowwise() += layer.beta.transpose();
    Eigen::MatrixXd out = bn.cwiseMax(0.0);

    if (cache) {
        cache->input = x;
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->bn_out = std::move(bn);
    }
    return out;
}

Eigen::MatrixXd dense_bn_relu_backward(const EncoderLayer& layer,
                                       const ForwardCache::EncLayerCache& cache,
                                       const Eigen::MatrixXd& dout, EncoderLayerGrad& grad) {
    const double n = static_cast<double>(dout.rows());

    Eigen::MatrixXd dbn = (dout.array() * (cache.bn_out.array() > 0.0).cast<double>()).matrix();
    grad.gamma = (dbn.array() * cache.xhat.array()).colwise().sum();
    grad.beta = dbn.colwise().sum();

    Eigen::MatrixXd dxhat = dbn.array().rowwise() * layer.gamma.transpose().array();
    Eigen::VectorXd sum_dxhat = dxhat.colwise().sum();
    Eigen::VectorXd sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).colwise().sum();

    Eigen::MatrixXd da =
        (n * dxhat.array() - (Eigen::MatrixXd::Ones(dout.rows(), 1) * sum_dxhat.transpose()).array() -
         cache.xhat.array().rowwise() * sum_dxhat_xhat.transpose().array())
            .rowwise() *
        (cache.inv_std.transpose().array() / n);

    grad.weight.noalias() = da.transpose() * cache.input;
    return da * layer.weight;
}

Eigen::MatrixXd encoder_forward(const Eigen::MatrixXd& x, Model& model, Mode mode, ForwardCache* cache) {
    if (x.cols() != 3) throw std::invalid_argument("encoder_forward: input must have 3 columns");
    if (!x.allFinite()) throw std::invalid_argument("encoder_forward: non-finite input");

    Eigen::MatrixXd cur = x;
    for (EncoderLayer& layer : model.encoder) {
        ForwardCache::EncLayerCache lc;
        cur = dense_bn_relu_forward(layer, cur, mode, cache ? &lc : nullptr);
        if (cache) cache->enc.push_back(std::move(lc));
    }
    return cur;
}

Eigen::MatrixXd gru_forward(const Eigen::MatrixXd& encoded, Eigen::Index batch, Model& model,
                            Mode mode, ForwardCache* cache) {
    if (batch < 1 || encoded.rows() % batch != 0)
        throw std::invalid_argument("gru_forward: rows must be a multiple of batch");
    const Eigen::Index steps = encoded.rows() / batch;
    const Eigen::Index hidden = model.config.hidden;

    Eigen::MatrixXd layer_in = encoded;
    Eigen::MatrixXd h;
    for (GruLayer& layer : model.gru) {
        if (layer.wz.cols() != layer_in.cols()) throw std::invalid_argument("gru_forward: shape mismatch");
        h = Eigen::MatrixXd::Zero(batch, hidden);
        Eigen::MatrixXd layer_out(encoded.rows(), hidden);
        ForwardCache::GruLayerCache lc;

        for (Eigen::Index t = 0; t < steps; ++t) {
            auto xt = layer_in.middleRows(t * batch, batch);

            Eigen::MatrixXd az = affine_rows(xt, layer.wz, mode) + affine_rows(h, layer.uz, mode);
            az.rowwise() += layer.bz.transpose();
            Eigen::MatrixXd z = sigmoid(az);

            Eigen::MatrixXd ar = affine_rows(xt, layer.wr, mode) + affine_rows(h, layer.ur, mode);
            ar.rowwise() += layer.br.transpose();
            Eigen::MatrixXd r = sigmoid(ar);

            Eigen::MatrixXd ah = affine_rows(xt, layer.wh, mode) +
                                 affine_rows((r.array() * h.array()).matrix(), layer.uh, mode);
            ah.rowwise() += layer.bh.transpose();
            Eigen::MatrixXd hc = ah.array().tanh();

            h = ((1.0 - z.array()) * h.array() + z.array() * hc.array()).matrix();
            layer_out.middleRows(t * batch, batch) = h;

            if (cache) {
                lc.z.push_back(std::move(z));
                lc.r.push_back(std::move(r));
                lc.hc.push_back(std::move(hc));
                lc.h.push_back(h);
            }
        }
        if (cache) cache->gru.push_back(std::move(lc));
        layer_in = std::move(layer_out);
    }
    if (cache) {
        cache->batch = batch;
        cache->steps = steps;
        cache->final_h = h;
    }
    return h;
}

Eigen::MatrixXd head_forward(const Eigen::MatrixXd& h, const Model& model, Mode mode) {
    if (h.cols() != model.head.weight.cols()) throw std::invalid_argument("head_forward: shape mismatch");
    Eigen::MatrixXd y = affine_rows(h, model.head.weight, mode);
    y.rowwise() += model.head.bias.transpose();
    return y;
}

Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Eigen::Index batch, Model& model, Mode mode,
                        ForwardCache* cache) {
    if (cache) {
        cache->mode = mode;
        cache->enc.clear();
        cache->gru.clear();
    }
    Eigen::MatrixXd encoded = encoder_forward(x, model, mode, cache);
    if (cache) cache->enc_out = encoded;
    Eigen::MatrixXd h = gru_forward(encoded, batch, model, mode, cache);
    return head_forward(h, model, mode);
}

GradientSet backward(const Model& model, const ForwardCache& cache, const Eigen::MatrixXd& dy) {
    if (cache.mode != Mode::Train) throw std::invalid_argument("backward: cache must come from a train-mode forward");
    if (dy.rows() != cache.batch || dy.cols() != 3) throw std::invalid_argument("backward: dL/dy shape mismatch");

    const Eigen::Index batch = cache.batch;
    const Eigen::Index steps = cache.steps;
    const Eigen::Index hidden = model.config.hidden;
    GradientSet grads = GradientSet::zeros_like(model);

    // head
    grads.head.weight = dy.transpose() * cache.final_h;
    grads.head.bias = dy.colwise().sum();

    // per-step gradients flowing into the current layer's outputs
    Eigen::MatrixXd dseq = Eigen::MatrixXd::Zero(steps * batch, hidden);
    dseq.middleRows((steps - 1) * batch, batch) = dy * model.head.weight;

    for (int l = static_cast<int>(model.gru.size()) - 1; l >= 0; --l) {
        const GruLayer& layer = model.gru[l];
        const ForwardCache::GruLayerCache& lc = cache.gru[l];
        GruLayer& g = grads.gru[l];
        const Eigen::Index in_dim = layer.wz.cols();

        Eigen::MatrixXd din = Eigen::MatrixXd::Zero(steps * batch, in_dim);
        Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(batch, hidden);

        for (Eigen::Index t = steps - 1; t >= 0; --t) {
            Eigen::MatrixXd G = dseq.middleRows(t * batch, batch) + dh_next;
            const Eigen::MatrixXd& z = lc.z[t];
            const Eigen::MatrixXd& r = lc.r[t];
            const Eigen::MatrixXd& hc = lc.hc[t];
            Eigen::MatrixXd h_prev =
                (t > 0) ? lc.h[t - 1] : Eigen::MatrixXd::Zero(batch, hidden);
            Eigen::MatrixXd xt = (l == 0)
                                     ? Eigen::MatrixXd(cache.enc_out.middleRows(t * batch, batch))
                                     : cache.gru[l - 1].h[t];

            Eigen::MatrixXd dhc = (G.array() * z.array()).matrix();
            Eigen::MatrixXd dz = (G.array() * (hc.array() - h_prev.array())).matrix();
            Eigen::MatrixXd dh_prev = (G.array() * (1.0 - z.array())).matrix();

            Eigen::MatrixXd dah = (dhc.array() * (1.0 - hc.array().square())).matrix();
            g.wh.noalias() += dah.transpose() * xt;
            g.uh.noalias() += dah.transpose() * (r.array() * h_prev.array()).matrix();
            g.bh += dah.colwise().sum();

            Eigen::MatrixXd drh = dah * layer.uh;
            Eigen::MatrixXd dr = (drh.array() * h_prev.array()).matrix();
            dh_prev.array() += drh.array() * r.array();

            Eigen::MatrixXd dar = (dr.array() * r.array() * (1.0 - r.array())).matrix();
            g.wr.noalias() += dar.transpose() * xt;
            g.ur.noalias() += dar.transpose() * h_prev;
            g.br += dar.colwise().sum();
            dh_prev.noalias() += dar * layer.ur;

            Eigen::MatrixXd daz = (dz.array() * z.array() * (1.0 - z.array())).matrix();
            g.wz.noalias() += daz.transpose() * xt;
            g.uz.noalias() += daz.transpose() * h_prev;
            g.bz += daz.colwise().sum();
            dh_prev.noalias() += daz * layer.uz;

            din.middleRows(t * batch, batch).noalias() = daz * layer.wz + dar * layer.wr + dah * layer.wh;
            dh_next = std::move(dh_prev);
        }
        dseq = std::move(din);
    }

    // dseq is now the gradient w.r.t. the encoder output
    Eigen::MatrixXd dout = std::move(dseq);
    for (int l = static_cast<int>(model.encoder.size()) - 1; l >= 0; --l)
        dout = dense_bn_relu_backward(model.encoder[l], cache.enc[l], dout, grads.encoder[l]);
    return grads;
}

void pack_batch(const std::vector<TrainingSample>& samples, const std::vector<std::uint32_t>& order,
                std::size_t from, std::size_t to, Eigen::MatrixXd& x, Eigen::MatrixXd& targets) {
    if (to <= from || to > order.size()) throw std::invalid_argument("pack_batch: bad range");
    const Eigen::Index batch = static_cast<Eigen::Index>(to - from);
    const Eigen::Index steps = samples[order[from]].inputs.rows();
    x.resize(steps * batch, 3);
    targets.resize(batch, 3);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const TrainingSample& s = samples[order[from + static_cast<std::size_t>(b)]];
        if (s.inputs.rows() != steps) throw std::invalid_argument("pack_batch: inconsistent sequence length");
        for (Eigen::Index t = 0; t < steps; ++t) x.row(t * batch + b) = s.inputs.row(t);
        targets.row(b) = s.target.transpose();
    }
}

}  // namespace mortonnet
