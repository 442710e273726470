#include "roughmetric/field_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "roughmetric/error.hpp"

namespace roughmetric {

namespace {

using nlohmann::json;

static_assert(sizeof(double) == 8);

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) {
    return bits;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((bits >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
}

void write_payload(std::span<const double> values, const std::filesystem::path& path) {
  std::vector<char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(bytes.data() + 8 * i, &bits, 8);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<double> read_payload(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != expected * 8) {
    throw FormatError(path.string() + ": payload holds " + std::to_string(size) +
                      " bytes, header implies " + std::to_string(expected * 8));
  }
  in.seekg(0);
  std::vector<char> bytes(size);
  in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("failed reading " + path.string());
  std::vector<double> values(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes.data() + 8 * i, 8);
    values[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  return values;
}

void write_meta(const Domain& domain, int components, const std::vector<std::size_t>& flagged,
                const std::filesystem::path& path) {
  json meta;
  meta["format_version"] = kFieldFormatVersion;
  meta["kind"] = to_string(domain.kind());
  meta["dim"] = domain.dim();
  json extent = json::array();
  json resolution = json::array();
  for (int a = 0; a < domain.dim(); ++a) {
    extent.push_back(domain.extent(a));
    resolution.push_back(domain.resolution(a));
  }
  meta["extent"] = extent;
  meta["resolution"] = resolution;
  meta["components_per_node"] = components;
  meta["flagged_nodes"] = flagged;
  std::ofstream out(meta_path(path), std::ios::trunc);
  if (!out) throw FormatError("cannot open " + meta_path(path).string() + " for writing");
  out << meta.dump() << '\n';
}

}  // namespace

std::filesystem::path meta_path(const std::filesystem::path& payload) {
  std::filesystem::path p = payload;
  p += ".meta.json";
  return p;
}

void write_field(const ScalarField& field, const std::filesystem::path& path) {
  write_payload(field.values(), path);
  write_meta(field.domain(), 1, field.flagged_nodes(), path);
}

void write_field(const MetricField& field, const std::filesystem::path& path) {
  write_payload(field.components(), path);
  // Only generator-declared singular nodes are stored; non-SPD flags are
  // re-derived from the components on read.
  std::vector<std::size_t> singular;
  for (std::size_t n : field.flagged_nodes()) {
    const auto& bad = field.non_spd_nodes();
    if (!std::binary_search(bad.begin(), bad.end(), n)) singular.push_back(n);
  }
  write_meta(field.domain(), field.components_per_node(), singular, path);
}

FieldHeader read_field_header(const std::filesystem::path& path) {
  std::ifstream in(meta_path(path));
  if (!in) throw FormatError("missing sidecar " + meta_path(path).string());
  std::string line;
  std::getline(in, line);
  json meta;
  try {
    meta = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(meta_path(path).string() + ": " + e.what());
  }
  FieldHeader header;
  try {
    header.format_version = meta.at("format_version").get<int>();
    if (header.format_version != kFieldFormatVersion) {
      throw FormatError(path.string() + ": format_version " +
                        std::to_string(header.format_version) + " is not supported (expected " +
                        std::to_string(kFieldFormatVersion) + ")");
    }
    const DomainKind kind = domain_kind_from_string(meta.at("kind").get<std::string>());
    const int dim = meta.at("dim").get<int>();
    const auto extent = meta.at("extent").get<std::vector<double>>();
    const auto resolution = meta.at("resolution").get<std::vector<int>>();
    if (static_cast<int>(extent.size()) != dim || static_cast<int>(resolution.size()) != dim) {
      throw FormatError(path.string() + ": extent/resolution arity does not match dim");
    }
    std::array<double, 3> e{1.0, 1.0, 1.0};
    std::array<int, 3> r{8, 8, 8};
    for (int a = 0; a < dim; ++a) {
      e[a] = extent[a];
      r[a] = resolution[a];
    }
    header.domain = Domain::make(kind, dim, e, r);
    header.components_per_node = meta.at("components_per_node").get<int>();
    header.flagged_nodes = meta.at("flagged_nodes").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw FormatError(meta_path(path).string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(meta_path(path).string() + ": " + e.what());
  }
  return header;
}

ScalarField read_scalar_field(const std::filesystem::path& path) {
  FieldHeader header = read_field_header(path);
  if (header.components_per_node != 1) {
    throw FormatError(path.string() + ": expected 1 component per node, header declares " +
                      std::to_string(header.components_per_node));
  }
  auto values = read_payload(path, header.domain.node_count());
  try {
    return ScalarField(header.domain, std::move(values), std::move(header.flagged_nodes));
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

MetricField read_metric_field(const std::filesystem::path& path) {
  FieldHeader header = read_field_header(path);
  const int expected = SymMatrix::packed_size(header.domain.dim());
  if (header.components_per_node != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) +
                      " components per node, header declares " +
                      std::to_string(header.components_per_node));
  }
  auto comps = read_payload(path, header.domain.node_count() * expected);
  return MetricField::from_components(header.domain, std::move(comps),
                                      std::move(header.flagged_nodes));
}

}  // namespace roughmetric
