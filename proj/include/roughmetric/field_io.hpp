#pragma once

// Binary field files: a payload of little-endian float64 values, node-major
// and row-major, next to a one-line JSON sidecar `<path>.meta.json`:
//   {"format_version":1,"kind":...,"dim":...,"extent":[...],"resolution":[...],
//    "components_per_node":...,"flagged_nodes":[...]}

#include <cstddef>
#include <filesystem>
#include <vector>

#include "roughmetric/grid.hpp"

namespace roughmetric {

inline constexpr int kFieldFormatVersion = 1;

struct FieldHeader {
  int format_version = kFieldFormatVersion;
  Domain domain = Domain::make(DomainKind::torus, 2, 1.0, 8);
  int components_per_node = 1;
  std::vector<std::size_t> flagged_nodes;
};

std::filesystem::path meta_path(const std::filesystem::path& payload);

void write_field(const ScalarField& field, const std::filesystem::path& path);
void write_field(const MetricField& field, const std::filesystem::path& path);

FieldHeader read_field_header(const std::filesystem::path& path);
ScalarField read_scalar_field(const std::filesystem::path& path);
// Inverse and eigenvalue caches are rebuilt from the stored components.
MetricField read_metric_field(const std::filesystem::path& path);

}  // namespace roughmetric
