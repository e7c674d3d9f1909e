#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mortonnet/core.hpp"
#include "mortonnet/features.hpp"
#include "mortonnet/sequence.hpp"
#include "mortonnet/train.hpp"

namespace mortonnet {

/// Text point cloud: one "x y z [label]" line per point, '#' comments
/// ignored, column count consistent across the file. write_xyz prints 9
/// significant digits, so read(write(cloud)) preserves coordinates to that
/// precision and labels exactly.
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud,
               const std::vector<std::string>& comment_lines = {});

/// One tensor of a container file. Exactly one payload vector (matching
/// dtype) is populated; dims define the row-major layout.
struct Tensor {
    enum class DType : std::uint8_t { F32 = 0, F64 = 1, I64 = 2 };

    DType dtype = DType::F64;
    std::vector<std::uint64_t> dims;
    std::vector<float> f32;
    std::vector<double> f64;
    std::vector<std::int64_t> i64;

    std::uint64_t element_count() const;
    void validate() const;

    static Tensor scalar(double value);
    static Tensor scalar(std::int64_t value);
    static Tensor from_vector(const std::vector<double>& values);
    static Tensor from_vector(const std::vector<std::int64_t>& values);
    static Tensor from_matrix(const Eigen::MatrixXd& m);  // dims {rows, cols}

    double as_scalar_f64() const;
    std::int64_t as_scalar_i64() const;
    Eigen::MatrixXd as_matrix() const;
};

/// Named tensor set with insertion-ordered, unique names. The on-disk format
/// is: magic "MSEQ", format version u32, tensor count u64, then per tensor
/// name (u32 length + UTF-8 bytes), dtype tag u8, rank u32, dims u64 each,
/// and the little-endian row-major payload.
class TensorContainer {
public:
    void add(const std::string& name, Tensor tensor);
    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

/// Atomic (write-temp-then-rename) container write; f64 payloads round-trip
/// bit-exactly.
void save_container(const std::string& path, const TensorContainer& container);
TensorContainer load_container(const std::string& path);

/// Normalized sequence dataset with its generation config echoed in.
struct DatasetFile {
    std::vector<TrainingSample> samples;
    SequenceGenConfig gen;
    int bits_per_axis = 16;
    std::vector<std::int64_t> skipped_points;
};

void save_dataset(const std::string& path, const DatasetFile& dataset);
DatasetFile load_dataset(const std::string& path);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Per-point feature matrix with the configs that produced it echoed in.
struct FeatureFile {
    FeatureMatrix features;
    SequenceGenConfig gen;
    int bits_per_axis = 16;
    std::int64_t hidden = 0;
};

void save_features(const std::string& path, const FeatureFile& file);
FeatureFile load_features(const std::string& path);

/// CSV log, schema epoch,train_loss,val_loss,lr,val_rho_acc; `comment_lines`
/// go first as '#' lines (config echo).
void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log,
                         const std::vector<std::string>& comment_lines = {});

}  // namespace mortonnet
