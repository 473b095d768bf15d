#ifndef NEGMEM_FEATURES_HPP_
#define NEGMEM_FEATURES_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace negmem {

using ClassId = std::int32_t;

/// Provenance tag of memory entries that come from an external pool.
inline constexpr ClassId kExternalClass = -1;

using FeatureVector = std::vector<float>;
using FeatureView = std::span<const float>;

enum class FileFormat { Binary, Csv };

/// Feature vectors of one class, split once into train and validation parts.
/// Both partitions keep the order the vectors had in the source file.
struct ClassFeatures {
  ClassId class_id = 0;
  std::vector<FeatureVector> train;
  std::vector<FeatureVector> validation;

  bool operator==(const ClassFeatures&) const = default;
};

struct LabeledDataset {
  std::size_t dimension = 0;
  std::vector<ClassFeatures> classes;  // ascending class_id
  std::vector<ClassId> class_order;    // incremental batch order

  bool contains(ClassId id) const;
  const ClassFeatures& at(ClassId id) const;
  std::size_t train_count() const;

  /// Throws FormatError when ids repeat, a class has no train vectors, or a
  /// vector has the wrong length.
  void validate() const;

  bool operator==(const LabeledDataset&) const = default;
};

struct LabeledSample {
  ClassId class_id = 0;
  FeatureVector values;

  bool operator==(const LabeledSample&) const = default;
};

/// Flat record list, as stored on disk.
struct FeatureTable {
  std::size_t dimension = 0;
  std::vector<LabeledSample> records;
};

double dot(FeatureView a, FeatureView b);
double l2_norm(FeatureView v);

/// Returns v / ||v||. Throws ZeroVector when ||v|| < 1e-12.
FeatureVector l2_normalize(FeatureView v);

/// Normalizes in place unless the vector is already unit length within 1e-6,
/// which makes normalization idempotent at the bit level.
void normalize_in_place(FeatureVector& v);

FileFormat parse_format(std::string_view name);

/// Reads records verbatim (no normalization). Throws FormatError naming the
/// offending record, or IoError when the file cannot be opened.
FeatureTable read_feature_table(const std::filesystem::path& path, FileFormat format);
void write_feature_table(const FeatureTable& table, const std::filesystem::path& path,
                         FileFormat format);

/// Normalized records in file order, without a train/validation split.
FeatureTable load_samples(const std::filesystem::path& path, FileFormat format);

/// Groups normalized records by class and holds out `validation_per_class`
/// vectors per class, chosen by a seeded shuffle of the class's records.
LabeledDataset split_dataset(const FeatureTable& table, std::size_t validation_per_class,
                             std::uint64_t seed);

LabeledDataset load_dataset(const std::filesystem::path& path, FileFormat format,
                            std::size_t validation_per_class, std::uint64_t seed);

/// Writes every class's train vectors followed by its validation vectors.
/// Loading the result with validation_per_class = 0 reproduces a dataset
/// whose validation partitions are empty.
void write_dataset(const LabeledDataset& dataset, const std::filesystem::path& path,
                   FileFormat format);

/// Size in bytes of a binary feature file with `records` rows of `dimension`.
std::uint64_t binary_file_size(std::size_t dimension, std::size_t records);

}  // namespace negmem

#endif  // NEGMEM_FEATURES_HPP_
