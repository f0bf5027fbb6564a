#include "iqbench/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include "json.hpp"

#include "bytes.hpp"
#include "iqbench/error.hpp"
#include "iqbench/rng.hpp"

namespace iqbench {

using json = nlohmann::json;
using namespace detail;

namespace {

constexpr std::size_t kPreludeSize = 4 + 2 + 4;

DatasetHeader parse_header(std::string_view bytes, std::size_t* payload_offset) {
  require(bytes.size() >= kPreludeSize, ErrorCode::kTruncated, "dataset shorter than its prelude");
  require(std::memcmp(bytes.data(), kDatasetMagic, 4) == 0, ErrorCode::kBadMagic,
          "not an IQDS file (bad magic)");
  const auto version = get_u16(bytes, 4);
  require(version == kDatasetVersion, ErrorCode::kUnsupportedVersion,
          "unsupported IQDS version " + std::to_string(version));
  const auto header_len = get_u32(bytes, 6);
  require(bytes.size() >= kPreludeSize + header_len, ErrorCode::kTruncated,
          "dataset truncated inside header");
  json h;
  try {
    h = json::parse(bytes.substr(kPreludeSize, header_len));
  } catch (const json::exception& e) {
    fail(ErrorCode::kHeaderMismatch, std::string("unreadable IQDS header: ") + e.what());
  }
  DatasetHeader out;
  try {
    const auto shape = h.at("shape").get<std::vector<std::size_t>>();
    require(shape.size() == 4 && shape[2] == 2, ErrorCode::kHeaderMismatch,
            "IQDS shape must be [N, M, 2, T]");
    out.count = shape[0];
    out.antennas = shape[1];
    out.time = shape[3];
    out.dtype = h.at("dtype").get<int>();
    out.label_fields = h.at("labels").get<std::vector<std::string>>();
    out.provenance = h.value("provenance", std::string());
  } catch (const json::exception& e) {
    fail(ErrorCode::kHeaderMismatch, std::string("malformed IQDS header: ") + e.what());
  }
  require(out.dtype == 0, ErrorCode::kHeaderMismatch,
          "unsupported dtype code " + std::to_string(out.dtype));
  require(out.antennas > 0 && out.time > 0, ErrorCode::kHeaderMismatch,
          "IQDS header declares an empty record shape");
  if (payload_offset) *payload_offset = kPreludeSize + header_len;
  return out;
}

}  // namespace

std::span<const double> IQDataset::sample(std::size_t i) const {
  require(i < count, ErrorCode::kInvalidArgument,
          "sample index " + std::to_string(i) + " out of range (" + std::to_string(count) + ")");
  return {samples.data() + i * sample_size(), sample_size()};
}

std::int32_t IQDataset::label(std::size_t i, std::size_t field) const {
  require(i < count && field < label_fields.size(), ErrorCode::kInvalidArgument,
          "label index out of range");
  return labels[i * label_fields.size() + field];
}

std::size_t IQDataset::field_index(std::string_view name) const {
  for (std::size_t f = 0; f < label_fields.size(); ++f) {
    if (label_fields[f] == name) return f;
  }
  fail(ErrorCode::kInvalidArgument, "dataset has no label field '" + std::string(name) + "'");
}

bool IQDataset::has_field(std::string_view name) const {
  return std::find(label_fields.begin(), label_fields.end(), name) != label_fields.end();
}

std::vector<int> IQDataset::label_column(std::string_view name) const {
  const auto f = field_index(name);
  std::vector<int> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = labels[i * label_fields.size() + f];
  return out;
}

void IQDataset::validate() const {
  require(samples.size() == count * sample_size(), ErrorCode::kShapeMismatch,
          "sample buffer holds " + std::to_string(samples.size()) + " values, expected " +
              std::to_string(count * sample_size()));
  require(labels.size() == count * label_fields.size(), ErrorCode::kShapeMismatch,
          "label buffer holds " + std::to_string(labels.size()) + " values, expected " +
              std::to_string(count * label_fields.size()));
  require(antennas > 0 && time > 0, ErrorCode::kShapeMismatch, "empty record shape");
}

std::string encode_dataset(const IQDataset& ds) {
  ds.validate();
  json h;
  h["shape"] = {ds.count, ds.antennas, 2, ds.time};
  h["dtype"] = 0;
  h["labels"] = ds.label_fields;
  h["provenance"] = ds.provenance;
  const std::string header = h.dump();

  std::string out;
  out.reserve(kPreludeSize + header.size() + ds.samples.size() * 4 + ds.labels.size() * 4);
  out.append(kDatasetMagic, 4);
  put_u16(out, kDatasetVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (double v : ds.samples) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (auto l : ds.labels) put_u32(out, static_cast<std::uint32_t>(l));
  return out;
}

IQDataset decode_dataset(std::string_view bytes) {
  std::size_t offset = 0;
  const auto h = parse_header(bytes, &offset);
  IQDataset ds;
  ds.count = h.count;
  ds.antennas = h.antennas;
  ds.time = h.time;
  ds.label_fields = h.label_fields;
  ds.provenance = h.provenance;
  const std::size_t n_values = ds.count * ds.sample_size();
  const std::size_t n_labels = ds.count * ds.label_fields.size();
  const std::size_t expected = offset + 4 * (n_values + n_labels);
  require(bytes.size() >= expected, ErrorCode::kTruncated,
          "IQDS payload truncated: " + std::to_string(bytes.size()) + " bytes, header implies " +
              std::to_string(expected));
  require(bytes.size() == expected, ErrorCode::kHeaderMismatch,
          "IQDS file has " + std::to_string(bytes.size() - expected) +
              " trailing bytes beyond the declared shape");
  ds.samples.resize(n_values);
  for (std::size_t i = 0; i < n_values; ++i) {
    ds.samples[i] = std::bit_cast<float>(get_u32(bytes, offset + 4 * i));
  }
  offset += 4 * n_values;
  ds.labels.resize(n_labels);
  for (std::size_t i = 0; i < n_labels; ++i) {
    ds.labels[i] = static_cast<std::int32_t>(get_u32(bytes, offset + 4 * i));
  }
  return ds;
}

void write_dataset(const IQDataset& dataset, const std::filesystem::path& path) {
  write_file(path, encode_dataset(dataset));
}

IQDataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

DatasetHeader read_dataset_header(const std::filesystem::path& path) {
  return parse_header(read_file(path), nullptr);
}

IQDataset import_raw(const std::filesystem::path& sidecar) {
  json s;
  try {
    s = json::parse(read_file(sidecar));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, "sidecar " + sidecar.string() + " is not valid JSON: " + e.what());
  }
  IQDataset ds;
  std::string data_name, label_name;
  try {
    ds.count = s.at("n").get<std::size_t>();
    ds.antennas = s.at("m").get<std::size_t>();
    ds.time = s.at("t").get<std::size_t>();
    const auto dtype = s.value("dtype", std::string("float32"));
    require(dtype == "float32", ErrorCode::kConfig, "sidecar dtype must be float32, got " + dtype);
    ds.label_fields = s.value("labels", std::vector<std::string>{});
    data_name = s.at("data").get<std::string>();
    label_name = s.value("label_data", std::string());
    ds.provenance = s.value("provenance", std::string("imported from ") + sidecar.filename().string());
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "sidecar " + sidecar.string() + ": " + e.what());
  }
  require(ds.count > 0 && ds.antennas > 0 && ds.time > 0, ErrorCode::kShapeMismatch,
          "sidecar declares an empty shape");
  const auto base = sidecar.parent_path();
  const std::string payload = read_file(base / data_name);
  const std::size_t n_values = ds.count * ds.sample_size();
  require(payload.size() == 4 * n_values, ErrorCode::kShapeMismatch,
          "payload " + data_name + " holds " + std::to_string(payload.size() / 4) +
              " floats but the sidecar declares n*m*2*t = " + std::to_string(n_values));
  ds.samples.resize(n_values);
  for (std::size_t i = 0; i < n_values; ++i) {
    ds.samples[i] = std::bit_cast<float>(get_u32(payload, 4 * i));
  }
  const std::size_t n_labels = ds.count * ds.label_fields.size();
  if (label_name.empty()) {
    ds.labels.assign(n_labels, kUnlabeled);
  } else {
    const std::string raw = read_file(base / label_name);
    require(raw.size() == 4 * n_labels, ErrorCode::kShapeMismatch,
            "label file " + label_name + " holds " + std::to_string(raw.size() / 4) +
                " integers but the sidecar declares " + std::to_string(n_labels));
    ds.labels.resize(n_labels);
    for (std::size_t i = 0; i < n_labels; ++i) {
      ds.labels[i] = static_cast<std::int32_t>(get_u32(raw, 4 * i));
    }
  }
  return ds;
}

Tensor make_batch(const IQDataset& ds, std::span<const std::size_t> indices, std::size_t antennas) {
  require(!indices.empty(), ErrorCode::kInvalidArgument, "make_batch: empty index list");
  require(ds.antennas <= antennas, ErrorCode::kShapeMismatch,
          "make_batch: dataset has " + std::to_string(ds.antennas) +
              " antennas, more than the requested " + std::to_string(antennas));
  const auto row = 2 * ds.time;
  Tensor out({indices.size(), antennas, 2, ds.time});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto src = ds.sample(indices[b]);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * antennas * row));
  }
  return out;
}

SplitManifest stratified_split(std::span<const int> classes, double train_fraction, std::uint64_t seed) {
  require(train_fraction >= 0.0 && train_fraction <= 1.0, ErrorCode::kInvalidArgument,
          "train fraction must lie in [0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < classes.size(); ++i) by_class[classes[i]].push_back(i);
  SplitManifest split;
  split.seed = seed;
  split.train_fraction = train_fraction;
  auto rng = make_rng(seed, 0x5b117);
  for (auto& [cls, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void write_split(const SplitManifest& split, const std::filesystem::path& path) {
  json j;
  j["seed"] = split.seed;
  j["train_fraction"] = split.train_fraction;
  j["train"] = split.train;
  j["test"] = split.test;
  write_file(path, j.dump() + "\n");
}

SplitManifest read_split(const std::filesystem::path& path) {
  SplitManifest split;
  try {
    const auto j = json::parse(read_file(path));
    split.seed = j.at("seed").get<std::uint64_t>();
    split.train_fraction = j.at("train_fraction").get<double>();
    split.train = j.at("train").get<std::vector<std::size_t>>();
    split.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "split manifest " + path.string() + ": " + e.what());
  }
  return split;
}

std::filesystem::path split_path_for(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension(".split.json");
  return p;
}

}  // namespace iqbench
