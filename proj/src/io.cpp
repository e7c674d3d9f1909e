#include "mortonnet/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mortonnet {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'E', 'Q'};
constexpr std::uint32_t kFormatVersion = 1;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string format_g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <class T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
void read_pod(std::istream& is, T& value, const std::string& path) {
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) fail(path, "truncated file");
}

void atomic_commit(const std::string& tmp, const std::string& path) {
    std::filesystem::rename(tmp, path);
}

}  // namespace

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open for reading");

    PointCloud cloud;
    std::string line;
    std::size_t line_no = 0;
    int columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;

        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x >> y >> z))
            fail(path, "malformed line " + std::to_string(line_no) + ": expected 'x y z [label]'");
        long label;
        bool has_label = static_cast<bool>(ls >> label);
        std::string rest;
        if (ls >> rest) fail(path, "malformed line " + std::to_string(line_no) + ": trailing data");

        int cols = has_label ? 4 : 3;
        if (columns == 0) columns = cols;
        if (cols != columns)
            fail(path, "inconsistent column count at line " + std::to_string(line_no));

        cloud.points.push_back({x, y, z});
        if (has_label) cloud.labels.push_back(static_cast<int>(label));
    }
    if (cloud.empty()) fail(path, "no points in file");
    cloud.check_consistent();
    return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud,
               const std::vector<std::string>& comment_lines) {
    cloud.check_consistent();
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) fail(path, "cannot open for writing");
        for (const std::string& c : comment_lines) out << "# " << c << "\n";
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            const Point3& p = cloud.points[i];
            out << format_g9(p.x) << ' ' << format_g9(p.y) << ' ' << format_g9(p.z);
            if (cloud.has_labels()) out << ' ' << cloud.labels[i];
            out << '\n';
        }
        if (!out) fail(path, "write failed");
    }
    atomic_commit(tmp, path);
}

std::uint64_t Tensor::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

void Tensor::validate() const {
    std::uint64_t n = element_count();
    std::uint64_t have = dtype == DType::F32 ? f32.size() : dtype == DType::F64 ? f64.size() : i64.size();
    if (have != n) throw std::runtime_error("tensor payload does not match its dims");
}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.dtype = DType::F64;
    t.dims = {1};
    t.f64 = {value};
    return t;
}

Tensor Tensor::scalar(std::int64_t value) {
    Tensor t;
    t.dtype = DType::I64;
    t.dims = {1};
    t.i64 = {value};
    return t;
}

Tensor Tensor::from_vector(const std::vector<double>& values) {
    Tensor t;
    t.dtype = DType::F64;
    t.dims = {values.size()};
    t.f64 = values;
    return t;
}

Tensor Tensor::from_vector(const std::vector<std::int64_t>& values) {
    Tensor t;
    t.dtype = DType::I64;
    t.dims = {values.size()};
    t.i64 = values;
    return t;
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
    Tensor t;
    t.dtype = DType::F64;
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.f64.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.f64.push_back(m(r, c));
    return t;
}

double Tensor::as_scalar_f64() const {
    if (dtype != DType::F64 || element_count() != 1) throw std::runtime_error("tensor is not an f64 scalar");
    return f64[0];
}

std::int64_t Tensor::as_scalar_i64() const {
    if (dtype != DType::I64 || element_count() != 1) throw std::runtime_error("tensor is not an i64 scalar");
    return i64[0];
}

Eigen::MatrixXd Tensor::as_matrix() const {
    if (dtype != DType::F64 || dims.size() != 2) throw std::runtime_error("tensor is not an f64 matrix");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64[at++];
    return m;
}

void TensorContainer::add(const std::string& name, Tensor tensor) {
    tensor.validate();
    if (contains(name)) throw std::runtime_error("duplicate tensor name: " + name);
    items_.emplace_back(name, std::move(tensor));
}

bool TensorContainer::contains(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return true;
    return false;
}

const Tensor& TensorContainer::get(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw std::runtime_error("missing tensor: " + name);
}

void save_container(const std::string& path, const TensorContainer& container) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(path, "cannot open for writing");
        out.write(kMagic, 4);
        write_pod(out, kFormatVersion);
        write_pod(out, static_cast<std::uint64_t>(container.size()));

        for (const auto& [name, tensor] : container.items()) {
            tensor.validate();
            write_pod(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod(out, static_cast<std::uint8_t>(tensor.dtype));
            write_pod(out, static_cast<std::uint32_t>(tensor.dims.size()));
            for (std::uint64_t d : tensor.dims) write_pod(out, d);
            switch (tensor.dtype) {
                case Tensor::DType::F32:
                    out.write(reinterpret_cast<const char*>(tensor.f32.data()),
                              static_cast<std::streamsize>(tensor.f32.size() * sizeof(float)));
                    break;
                case Tensor::DType::F64:
                    out.write(reinterpret_cast<const char*>(tensor.f64.data()),
                              static_cast<std::streamsize>(tensor.f64.size() * sizeof(double)));
                    break;
                case Tensor::DType::I64:
                    out.write(reinterpret_cast<const char*>(tensor.i64.data()),
                              static_cast<std::streamsize>(tensor.i64.size() * sizeof(std::int64_t)));
                    break;
            }
        }
        if (!out) fail(path, "write failed");
    }
    atomic_commit(tmp, path);
}

TensorContainer load_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open for reading");

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) fail(path, "bad magic (not a MSEQ container)");
    std::uint32_t version;
    read_pod(in, version, path);
    if (version != kFormatVersion)
        fail(path, "unsupported format version " + std::to_string(version));
    std::uint64_t count;
    read_pod(in, count, path);

    TensorContainer container;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t name_len;
        read_pod(in, name_len, path);
        if (name_len > (1u << 20)) fail(path, "unreasonable tensor name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) fail(path, "truncated file");

        std::uint8_t dtype_tag;
        read_pod(in, dtype_tag, path);
        if (dtype_tag > 2) fail(path, "unknown dtype tag in tensor " + name);
        std::uint32_t rank;
        read_pod(in, rank, path);
        if (rank > 8) fail(path, "unreasonable tensor rank in " + name);

        Tensor tensor;
        tensor.dtype = static_cast<Tensor::DType>(dtype_tag);
        tensor.dims.resize(rank);
        for (std::uint32_t d = 0; d < rank; ++d) read_pod(in, tensor.dims[d], path);
        std::uint64_t n = tensor.element_count();
        if (n > (std::uint64_t{1} << 33)) fail(path, "unreasonable tensor size in " + name);

        auto read_payload = [&](auto& vec) {
            vec.resize(n);
            using Elem = typename std::remove_reference_t<decltype(vec)>::value_type;
            in.read(reinterpret_cast<char*>(vec.data()), static_cast<std::streamsize>(n * sizeof(Elem)));
            if (!in) fail(path, "truncated payload in tensor " + name);
        };
        switch (tensor.dtype) {
            case Tensor::DType::F32: read_payload(tensor.f32); break;
            case Tensor::DType::F64: read_payload(tensor.f64); break;
            case Tensor::DType::I64: read_payload(tensor.i64); break;
        }
        container.add(name, std::move(tensor));
    }
    return container;
}

namespace {

void add_gen_config(TensorContainer& c, const std::string& prefix, const SequenceGenConfig& gen,
                    int bits_per_axis) {
    c.add(prefix + "k", Tensor::scalar(static_cast<std::int64_t>(gen.k)));
    c.add(prefix + "m", Tensor::scalar(static_cast<std::int64_t>(gen.m)));
    c.add(prefix + "scheme", Tensor::scalar(static_cast<std::int64_t>(gen.scheme.kind)));
    c.add(prefix + "scheme_seed", Tensor::scalar(static_cast<std::int64_t>(gen.scheme.seed)));
    c.add(prefix + "seed", Tensor::scalar(static_cast<std::int64_t>(gen.seed)));
    c.add(prefix + "bits", Tensor::scalar(static_cast<std::int64_t>(bits_per_axis)));
}

void load_gen_config(const TensorContainer& c, const std::string& prefix, SequenceGenConfig& gen,
                     int& bits_per_axis) {
    gen.k = static_cast<int>(c.get(prefix + "k").as_scalar_i64());
    gen.m = static_cast<int>(c.get(prefix + "m").as_scalar_i64());
    gen.scheme.kind = static_cast<OrderingKind>(c.get(prefix + "scheme").as_scalar_i64());
    gen.scheme.seed = static_cast<std::uint64_t>(c.get(prefix + "scheme_seed").as_scalar_i64());
    gen.seed = static_cast<std::uint64_t>(c.get(prefix + "seed").as_scalar_i64());
    bits_per_axis = static_cast<int>(c.get(prefix + "bits").as_scalar_i64());
}

}  // namespace

void save_dataset(const std::string& path, const DatasetFile& dataset) {
    if (dataset.samples.empty()) throw std::invalid_argument("save_dataset: no samples");
    const Eigen::Index steps = dataset.samples[0].inputs.rows();
    const std::uint64_t count = dataset.samples.size();

    Tensor inputs;
    inputs.dtype = Tensor::DType::F64;
    inputs.dims = {count, static_cast<std::uint64_t>(steps), 3};
    inputs.f64.reserve(count * static_cast<std::uint64_t>(steps) * 3);
    Tensor targets;
    targets.dtype = Tensor::DType::F64;
    targets.dims = {count, 3};
    std::vector<std::int64_t> centers, flags;
    for (const TrainingSample& s : dataset.samples) {
        if (s.inputs.rows() != steps) throw std::invalid_argument("save_dataset: inconsistent k");
        for (Eigen::Index t = 0; t < steps; ++t)
            for (Eigen::Index c = 0; c < 3; ++c) inputs.f64.push_back(s.inputs(t, c));
        for (Eigen::Index c = 0; c < 3; ++c) targets.f64.push_back(s.target(c));
        centers.push_back(s.center_index);
        flags.push_back(s.flags);
    }

    TensorContainer container;
    add_gen_config(container, "config/", dataset.gen, dataset.bits_per_axis);
    container.add("inputs", std::move(inputs));
    container.add("targets", std::move(targets));
    container.add("centers", Tensor::from_vector(centers));
    container.add("flags", Tensor::from_vector(flags));
    container.add("skipped", Tensor::from_vector(dataset.skipped_points));
    save_container(path, container);
}

DatasetFile load_dataset(const std::string& path) {
    TensorContainer container = load_container(path);
    DatasetFile dataset;
    load_gen_config(container, "config/", dataset.gen, dataset.bits_per_axis);

    const Tensor& inputs = container.get("inputs");
    const Tensor& targets = container.get("targets");
    const Tensor& centers = container.get("centers");
    const Tensor& flags = container.get("flags");
    if (inputs.dims.size() != 3 || inputs.dims[2] != 3 || targets.dims.size() != 2 || targets.dims[1] != 3)
        fail(path, "unexpected dataset tensor shapes");
    const std::uint64_t count = inputs.dims[0];
    const std::uint64_t steps = inputs.dims[1];
    if (targets.dims[0] != count || centers.element_count() != count || flags.element_count() != count)
        fail(path, "dataset tensor counts disagree");

    dataset.samples.resize(count);
    std::size_t at = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        TrainingSample& s = dataset.samples[i];
        s.inputs.resize(static_cast<Eigen::Index>(steps), 3);
        for (std::uint64_t t = 0; t < steps; ++t)
            for (int c = 0; c < 3; ++c)
                s.inputs(static_cast<Eigen::Index>(t), c) = inputs.f64[at++];
        for (int c = 0; c < 3; ++c) s.target(c) = targets.f64[i * 3 + static_cast<std::uint64_t>(c)];
        s.center_index = static_cast<std::uint32_t>(centers.i64[i]);
        s.flags = static_cast<std::uint8_t>(flags.i64[i]);
    }
    dataset.skipped_points = container.get("skipped").i64;
    return dataset;
}

namespace {

void add_model(TensorContainer& c, const std::string& prefix, const Model& model) {
    c.add(prefix + "config/k", Tensor::scalar(static_cast<std::int64_t>(model.config.k)));
    c.add(prefix + "config/enc_layers", Tensor::scalar(static_cast<std::int64_t>(model.config.enc_layers)));
    c.add(prefix + "config/enc_width", Tensor::scalar(static_cast<std::int64_t>(model.config.enc_width)));
    c.add(prefix + "config/gru_layers", Tensor::scalar(static_cast<std::int64_t>(model.config.gru_layers)));
    c.add(prefix + "config/hidden", Tensor::scalar(static_cast<std::int64_t>(model.config.hidden)));
    c.add(prefix + "config/init_seed", Tensor::scalar(static_cast<std::int64_t>(model.config.init_seed)));
    for (const TensorView& view : trainable_views(model)) {
        Eigen::Map<const Eigen::MatrixXd> m(view.data, view.rows, view.cols);
        c.add(prefix + view.name, Tensor::from_matrix(m));
    }
    for (const TensorView& view : buffer_views(model)) {
        Eigen::Map<const Eigen::MatrixXd> m(view.data, view.rows, view.cols);
        c.add(prefix + view.name, Tensor::from_matrix(m));
    }
}

Model load_model(const TensorContainer& c, const std::string& prefix) {
    ModelConfig cfg;
    cfg.k = static_cast<int>(c.get(prefix + "config/k").as_scalar_i64());
    cfg.enc_layers = static_cast<int>(c.get(prefix + "config/enc_layers").as_scalar_i64());
    cfg.enc_width = static_cast<int>(c.get(prefix + "config/enc_width").as_scalar_i64());
    cfg.gru_layers = static_cast<int>(c.get(prefix + "config/gru_layers").as_scalar_i64());
    cfg.hidden = static_cast<int>(c.get(prefix + "config/hidden").as_scalar_i64());
    cfg.init_seed = static_cast<std::uint64_t>(c.get(prefix + "config/init_seed").as_scalar_i64());

    Model model = init_model(cfg);
    auto restore = [&](std::vector<TensorView> views) {
        for (TensorView& view : views) {
            Eigen::MatrixXd m = c.get(prefix + view.name).as_matrix();
            if (m.rows() != view.rows || m.cols() != view.cols)
                throw std::runtime_error("checkpoint tensor shape mismatch: " + view.name);
            Eigen::Map<Eigen::MatrixXd>(view.data, view.rows, view.cols) = m;
        }
    };
    restore(trainable_views(model));
    restore(buffer_views(model));
    return model;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    TensorContainer c;
    add_model(c, "model/", ckpt.model);
    add_model(c, "best/", ckpt.best_model);

    const std::vector<TensorView> views = trainable_views(ckpt.model);
    for (std::size_t i = 0; i < views.size(); ++i) {
        c.add("adam/m/" + views[i].name, Tensor::from_matrix(ckpt.adam.m[i]));
        c.add("adam/v/" + views[i].name, Tensor::from_matrix(ckpt.adam.v[i]));
    }
    c.add("adam/t", Tensor::scalar(ckpt.adam.t));

    c.add("train/lr0", Tensor::scalar(ckpt.config.lr0));
    c.add("train/decay", Tensor::scalar(ckpt.config.decay));
    c.add("train/patience", Tensor::scalar(static_cast<std::int64_t>(ckpt.config.patience)));
    c.add("train/epochs", Tensor::scalar(static_cast<std::int64_t>(ckpt.config.epochs)));
    c.add("train/batch_size", Tensor::scalar(static_cast<std::int64_t>(ckpt.config.batch_size)));
    c.add("train/val_fraction", Tensor::scalar(ckpt.config.val_fraction));
    c.add("train/rho", Tensor::scalar(ckpt.config.rho));
    c.add("train/seed", Tensor::scalar(static_cast<std::int64_t>(ckpt.config.seed)));

    c.add("state/epoch", Tensor::scalar(static_cast<std::int64_t>(ckpt.epoch)));
    c.add("state/lr", Tensor::scalar(ckpt.lr));
    c.add("state/val_loss", Tensor::scalar(ckpt.val_loss));
    c.add("state/best_val_loss", Tensor::scalar(ckpt.best_val_loss));
    c.add("state/best_epoch", Tensor::scalar(static_cast<std::int64_t>(ckpt.best_epoch)));
    c.add("state/bad_epochs", Tensor::scalar(static_cast<std::int64_t>(ckpt.bad_epochs)));
    c.add("state/rng", Tensor::scalar(static_cast<std::int64_t>(ckpt.rng_state)));

    std::vector<std::int64_t> epochs;
    std::vector<double> train_loss, val_loss, lr, acc;
    for (const EpochLog& e : ckpt.log) {
        epochs.push_back(e.epoch);
        train_loss.push_back(e.train_loss);
        val_loss.push_back(e.val_loss);
        lr.push_back(e.lr);
        acc.push_back(e.val_rho_acc);
    }
    c.add("log/epoch", Tensor::from_vector(epochs));
    c.add("log/train_loss", Tensor::from_vector(train_loss));
    c.add("log/val_loss", Tensor::from_vector(val_loss));
    c.add("log/lr", Tensor::from_vector(lr));
    c.add("log/val_rho_acc", Tensor::from_vector(acc));

    save_container(path, c);
}

Checkpoint load_checkpoint(const std::string& path) {
    TensorContainer c = load_container(path);
    Checkpoint ckpt;
    ckpt.model = load_model(c, "model/");
    ckpt.best_model = load_model(c, "best/");

    ckpt.adam = AdamState::zeros_like(ckpt.model);
    const std::vector<TensorView> views = trainable_views(ckpt.model);
    for (std::size_t i = 0; i < views.size(); ++i) {
        Eigen::MatrixXd m = c.get("adam/m/" + views[i].name).as_matrix();
        Eigen::MatrixXd v = c.get("adam/v/" + views[i].name).as_matrix();
        ckpt.adam.m[i] = Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
        ckpt.adam.v[i] = Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
    }
    ckpt.adam.t = c.get("adam/t").as_scalar_i64();

    ckpt.config.lr0 = c.get("train/lr0").as_scalar_f64();
    ckpt.config.decay = c.get("train/decay").as_scalar_f64();
    ckpt.config.patience = static_cast<int>(c.get("train/patience").as_scalar_i64());
    ckpt.config.epochs = static_cast<int>(c.get("train/epochs").as_scalar_i64());
    ckpt.config.batch_size = static_cast<int>(c.get("train/batch_size").as_scalar_i64());
    ckpt.config.val_fraction = c.get("train/val_fraction").as_scalar_f64();
    ckpt.config.rho = c.get("train/rho").as_scalar_f64();
    ckpt.config.seed = static_cast<std::uint64_t>(c.get("train/seed").as_scalar_i64());

    ckpt.epoch = static_cast<int>(c.get("state/epoch").as_scalar_i64());
    ckpt.lr = c.get("state/lr").as_scalar_f64();
    ckpt.val_loss = c.get("state/val_loss").as_scalar_f64();
    ckpt.best_val_loss = c.get("state/best_val_loss").as_scalar_f64();
    ckpt.best_epoch = static_cast<int>(c.get("state/best_epoch").as_scalar_i64());
    ckpt.bad_epochs = static_cast<int>(c.get("state/bad_epochs").as_scalar_i64());
    ckpt.rng_state = static_cast<std::uint64_t>(c.get("state/rng").as_scalar_i64());

    const Tensor& epochs = c.get("log/epoch");
    for (std::size_t i = 0; i < epochs.i64.size(); ++i) {
        EpochLog e;
        e.epoch = static_cast<int>(epochs.i64[i]);
        e.train_loss = c.get("log/train_loss").f64[i];
        e.val_loss = c.get("log/val_loss").f64[i];
        e.lr = c.get("log/lr").f64[i];
        e.val_rho_acc = c.get("log/val_rho_acc").f64[i];
        ckpt.log.push_back(e);
    }
    return ckpt;
}

void save_features(const std::string& path, const FeatureFile& file) {
    TensorContainer c;
    add_gen_config(c, "config/", file.gen, file.bits_per_axis);
    c.add("config/hidden", Tensor::scalar(file.hidden));
    c.add("features", Tensor::from_matrix(file.features.values));
    std::vector<std::int64_t> valid(file.features.valid.begin(), file.features.valid.end());
    c.add("valid", Tensor::from_vector(valid));
    save_container(path, c);
}

FeatureFile load_features(const std::string& path) {
    TensorContainer c = load_container(path);
    FeatureFile file;
    load_gen_config(c, "config/", file.gen, file.bits_per_axis);
    file.hidden = c.get("config/hidden").as_scalar_i64();
    file.features.values = c.get("features").as_matrix();
    const Tensor& valid = c.get("valid");
    file.features.valid.assign(valid.i64.begin(), valid.i64.end());
    if (file.features.valid.size() != static_cast<std::size_t>(file.features.values.rows()))
        fail(path, "feature mask does not match feature rows");
    return file;
}

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log,
                         const std::vector<std::string>& comment_lines) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) fail(path, "cannot open for writing");
        for (const std::string& c : comment_lines) out << "# " << c << "\n";
        out << "epoch,train_loss,val_loss,lr,val_rho_acc\n";
        for (const EpochLog& e : log)
            out << e.epoch << ',' << format_g17(e.train_loss) << ',' << format_g17(e.val_loss) << ','
                << format_g17(e.lr) << ',' << format_g17(e.val_rho_acc) << '\n';
        if (!out) fail(path, "write failed");
    }
    atomic_commit(tmp, path);
}

}  // namespace mortonnet
