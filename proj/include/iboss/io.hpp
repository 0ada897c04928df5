#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iboss/types.hpp"

namespace iboss {

// Binary dataset layout: 20-byte header (magic "IBOS", u16 version = 1,
// u16 flags with bit 0 = has_response, u64 row count, u32 covariate count),
// then row-major little-endian f64 payload, response last in each row.
// Row-major keeps the splitter a pure byte-range copy.
inline constexpr char kMagic[4] = {'I', 'B', 'O', 'S'};
inline constexpr std::uint16_t kFormatVersion = 1;

// Reads the self-describing binary header.
DatasetMeta read_binary_meta(const std::filesystem::path& path);

// Derives CSV metadata: counts fields on the first data line (p = fields
// minus the response column when has_response), detects an optional header
// line, counts rows.
DatasetMeta infer_csv_meta(const std::filesystem::path& path, bool has_response);

// Writes a full dataset file in either format. CSV values use %.17g so a
// read-back reproduces the exact doubles.
void write_dataset(const std::filesystem::path& path, FileFormat format,
                   const Matrix& z, const Vector* responses);

// Splits a dataset file into ceil(N / rows_per_block) block files named
// <stem>_block_NNNNN<ext> in out_dir; blocks 1..B-1 hold exactly
// rows_per_block rows, the last holds the remainder. The payload is copied
// as raw bytes (binary) or raw lines (CSV); numerics are never parsed, so
// splitting is I/O bound. A CSV header line is replicated into every block.
std::vector<std::filesystem::path> split(const std::filesystem::path& source,
                                         std::int64_t rows_per_block,
                                         const std::filesystem::path& out_dir,
                                         FileFormat format);

// Loads one block file into memory, checking it against the dataset
// metadata (covariate count, response presence) and validating finiteness.
// The caller assigns block_index and row_offset afterwards; both start 0.
DataBlock read_block(const std::filesystem::path& path, const DatasetMeta& meta);

// Block files produced by split for a given source stem, sorted ascending.
std::vector<std::filesystem::path> list_block_files(
    const std::filesystem::path& dir);

}  // namespace iboss
