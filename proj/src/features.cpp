#include "negmem/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "negmem/error.hpp"
#include "negmem/random.hpp"

namespace negmem {

namespace detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace detail

namespace {

constexpr std::string_view kMagic = "DSF1";
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 8;

[[noreturn]] void format_error(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::FormatError, path.string() + ": " + what);
}

void check_finite(const FeatureVector& v, const std::filesystem::path& path, std::size_t record) {
  for (float x : v) {
    if (!std::isfinite(x)) {
      format_error(path, "record " + std::to_string(record) + " holds a non-finite value");
    }
  }
}

FeatureTable read_binary(const std::filesystem::path& path) {
  const std::string blob = detail::read_file(path);
  detail::ByteReader in(blob);
  if (!in.has(kHeaderSize)) format_error(path, "truncated header");
  if (in.bytes(4) != kMagic) format_error(path, "bad magic");
  const auto version = in.uint<std::uint16_t>();
  if (version != kVersion) format_error(path, "unsupported version " + std::to_string(version));
  FeatureTable table;
  table.dimension = in.uint<std::uint32_t>();
  if (table.dimension == 0) format_error(path, "dimension must be at least 1");
  const auto count = in.uint<std::uint64_t>();
  const std::size_t record_size = 4 + 4 * table.dimension;
  table.records.reserve(std::min<std::uint64_t>(count, in.remaining() / record_size));
  for (std::uint64_t r = 0; r < count; ++r) {
    if (!in.has(record_size)) {
      format_error(path, "record " + std::to_string(r) + " is truncated (expected " +
                             std::to_string(table.dimension) + " values)");
    }
    LabeledSample s;
    s.class_id = in.i32();
    s.values.resize(table.dimension);
    for (auto& x : s.values) x = in.f32();
    check_finite(s.values, path, r);
    table.records.push_back(std::move(s));
  }
  if (in.remaining() != 0) format_error(path, "trailing bytes after the last record");
  return table;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

FeatureTable read_csv(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line)) format_error(path, "missing header");
  const auto header = split_commas(trim(line));
  if (header.size() < 2 || trim(header[0]) != "class_id") {
    format_error(path, "header must be class_id,f0,...");
  }
  FeatureTable table;
  table.dimension = header.size() - 1;
  std::size_t record = 0;
  while (std::getline(lines, line)) {
    const auto row = trim(line);
    if (row.empty()) continue;
    const auto cells = split_commas(row);
    const auto where = "record " + std::to_string(record);
    if (cells.size() != header.size()) {
      format_error(path, where + " has " + std::to_string(cells.size() - 1) + " values, expected " +
                             std::to_string(table.dimension));
    }
    LabeledSample s;
    auto id_cell = trim(cells[0]);
    auto [p, ec] = std::from_chars(id_cell.data(), id_cell.data() + id_cell.size(), s.class_id);
    if (ec != std::errc() || p != id_cell.data() + id_cell.size()) {
      format_error(path, where + " has an invalid class_id");
    }
    s.values.resize(table.dimension);
    for (std::size_t j = 0; j < table.dimension; ++j) {
      auto cell = trim(cells[j + 1]);
      auto [q, ec2] = std::from_chars(cell.data(), cell.data() + cell.size(), s.values[j]);
      if (ec2 != std::errc() || q != cell.data() + cell.size()) {
        format_error(path, where + " has an unparsable value in column " + std::to_string(j));
      }
    }
    check_finite(s.values, path, record);
    table.records.push_back(std::move(s));
    ++record;
  }
  return table;
}

void append_float(std::string& out, float x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, end);
}

}  // namespace

bool LabeledDataset::contains(ClassId id) const {
  return std::any_of(classes.begin(), classes.end(),
                     [id](const ClassFeatures& c) { return c.class_id == id; });
}

const ClassFeatures& LabeledDataset::at(ClassId id) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), id,
                             [](const ClassFeatures& c, ClassId v) { return c.class_id < v; });
  if (it == classes.end() || it->class_id != id) {
    throw Error(ErrorCode::UnknownClassInEvalSet, "class " + std::to_string(id) + " not in dataset");
  }
  return *it;
}

std::size_t LabeledDataset::train_count() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.train.size();
  return n;
}

void LabeledDataset::validate() const {
  if (dimension == 0) throw Error(ErrorCode::FormatError, "dimension must be at least 1");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& c = classes[i];
    if (i > 0 && classes[i - 1].class_id >= c.class_id) {
      throw Error(ErrorCode::FormatError, "class ids must be unique and ascending");
    }
    if (c.train.empty()) {
      throw Error(ErrorCode::FormatError, "class " + std::to_string(c.class_id) + " has no train vectors");
    }
    for (const auto* part : {&c.train, &c.validation}) {
      for (const auto& v : *part) {
        if (v.size() != dimension) {
          throw Error(ErrorCode::FormatError,
                      "class " + std::to_string(c.class_id) + " holds a vector of length " +
                          std::to_string(v.size()) + ", expected " + std::to_string(dimension));
        }
      }
    }
  }
}

double dot(FeatureView a, FeatureView b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double l2_norm(FeatureView v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

FeatureVector l2_normalize(FeatureView v) {
  const double n = l2_norm(v);
  if (!(n >= 1e-12)) throw Error(ErrorCode::ZeroVector, "cannot normalize a vector of norm " + std::to_string(n));
  FeatureVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

void normalize_in_place(FeatureVector& v) {
  const double n = l2_norm(v);
  if (std::abs(n - 1.0) <= 1e-6) return;
  v = l2_normalize(v);
}

FileFormat parse_format(std::string_view name) {
  if (name == "binary" || name == "bin") return FileFormat::Binary;
  if (name == "csv") return FileFormat::Csv;
  throw Error(ErrorCode::ConfigError, "unknown feature format '" + std::string(name) + "'");
}

FeatureTable read_feature_table(const std::filesystem::path& path, FileFormat format) {
  return format == FileFormat::Binary ? read_binary(path) : read_csv(path);
}

void write_feature_table(const FeatureTable& table, const std::filesystem::path& path,
                         FileFormat format) {
  if (table.dimension == 0) throw Error(ErrorCode::FormatError, "dimension must be at least 1");
  for (std::size_t r = 0; r < table.records.size(); ++r) {
    if (table.records[r].values.size() != table.dimension) {
      throw Error(ErrorCode::FormatError, "record " + std::to_string(r) + " has the wrong length");
    }
  }
  if (format == FileFormat::Binary) {
    detail::ByteWriter out;
    out.bytes(kMagic);
    out.uint(kVersion);
    out.uint(static_cast<std::uint32_t>(table.dimension));
    out.uint(static_cast<std::uint64_t>(table.records.size()));
    for (const auto& s : table.records) {
      out.i32(s.class_id);
      for (float x : s.values) out.f32(x);
    }
    detail::write_file(path, out.data());
    return;
  }
  std::string text = "class_id";
  for (std::size_t j = 0; j < table.dimension; ++j) text += ",f" + std::to_string(j);
  text += '\n';
  for (const auto& s : table.records) {
    text += std::to_string(s.class_id);
    for (float x : s.values) {
      text += ',';
      append_float(text, x);
    }
    text += '\n';
  }
  detail::write_file(path, text);
}

FeatureTable load_samples(const std::filesystem::path& path, FileFormat format) {
  FeatureTable table = read_feature_table(path, format);
  for (std::size_t r = 0; r < table.records.size(); ++r) {
    try {
      normalize_in_place(table.records[r].values);
    } catch (const Error&) {
      throw Error(ErrorCode::ZeroVector, path.string() + ": record " + std::to_string(r) + " has zero norm");
    }
  }
  return table;
}

LabeledDataset split_dataset(const FeatureTable& table, std::size_t validation_per_class,
                             std::uint64_t seed) {
  std::map<ClassId, std::vector<const FeatureVector*>> grouped;
  for (const auto& s : table.records) grouped[s.class_id].push_back(&s.values);

  LabeledDataset ds;
  ds.dimension = table.dimension;
  for (const auto& [id, members] : grouped) {
    if (members.size() <= validation_per_class) {
      throw Error(ErrorCode::InsufficientSamples,
                  "class " + std::to_string(id) + " has " + std::to_string(members.size()) +
                      " vectors, needs more than " + std::to_string(validation_per_class));
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(static_cast<std::uint32_t>(id))}));
    std::vector<bool> held(members.size(), false);
    for (auto i : sample_without_replacement(members.size(), validation_per_class, rng)) held[i] = true;

    ClassFeatures cf;
    cf.class_id = id;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (held[i] ? cf.validation : cf.train).push_back(*members[i]);
    }
    ds.class_order.push_back(id);
    ds.classes.push_back(std::move(cf));
  }
  return ds;
}

LabeledDataset load_dataset(const std::filesystem::path& path, FileFormat format,
                            std::size_t validation_per_class, std::uint64_t seed) {
  auto ds = split_dataset(load_samples(path, format), validation_per_class, seed);
  if (ds.classes.empty()) throw Error(ErrorCode::FormatError, path.string() + ": no records");
  return ds;
}

void write_dataset(const LabeledDataset& dataset, const std::filesystem::path& path,
                   FileFormat format) {
  if (dataset.classes.empty()) throw Error(ErrorCode::FormatError, "refusing to write an empty dataset");
  dataset.validate();
  FeatureTable table;
  table.dimension = dataset.dimension;
  for (const auto& c : dataset.classes) {
    for (const auto* part : {&c.train, &c.validation}) {
      for (const auto& v : *part) table.records.push_back({c.class_id, v});
    }
  }
  write_feature_table(table, path, format);
}

std::uint64_t binary_file_size(std::size_t dimension, std::size_t records) {
  return kHeaderSize + static_cast<std::uint64_t>(records) * (4 + 4 * dimension);
}

}  // namespace negmem
