#include "iboss/io.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "iboss/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary dataset format is little-endian; big-endian hosts are "
              "not supported");

namespace iboss {
namespace {

constexpr std::size_t kHeaderBytes = 20;
constexpr std::size_t kCopyChunk = std::size_t{4} << 20;

void pack_header(unsigned char* out, const DatasetMeta& meta) {
  std::memcpy(out, kMagic, 4);
  const std::uint16_t version = kFormatVersion;
  const std::uint16_t flags = meta.has_response ? 1 : 0;
  const std::uint64_t n = static_cast<std::uint64_t>(meta.n_rows);
  const std::uint32_t p = static_cast<std::uint32_t>(meta.n_covariates);
  std::memcpy(out + 4, &version, 2);
  std::memcpy(out + 6, &flags, 2);
  std::memcpy(out + 8, &n, 8);
  std::memcpy(out + 16, &p, 4);
}

DatasetMeta unpack_header(const unsigned char* in, const std::string& path) {
  if (std::memcmp(in, kMagic, 4) != 0) {
    throw HeaderMismatch(path + ": missing binary magic bytes");
  }
  std::uint16_t version = 0, flags = 0;
  std::uint64_t n = 0;
  std::uint32_t p = 0;
  std::memcpy(&version, in + 4, 2);
  std::memcpy(&flags, in + 6, 2);
  std::memcpy(&n, in + 8, 8);
  std::memcpy(&p, in + 16, 4);
  if (version != kFormatVersion) {
    throw HeaderMismatch(path + ": unsupported format version " +
                         std::to_string(version));
  }
  DatasetMeta meta;
  meta.n_rows = static_cast<std::int64_t>(n);
  meta.n_covariates = static_cast<int>(p);
  meta.has_response = (flags & 1) != 0;
  meta.format = FileFormat::Binary;
  meta.source = path;
  return meta;
}

std::size_t row_bytes(const DatasetMeta& meta) {
  return 8 * (static_cast<std::size_t>(meta.n_covariates) +
              (meta.has_response ? 1 : 0));
}

// True when the token parses as a complete double.
bool parse_double(const std::string& token, double* out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  *out = std::strtod(begin, &end);
  return end != begin && *end == '\0' && !token.empty();
}

std::string first_field(const std::string& line) {
  const auto comma = line.find(',');
  return comma == std::string::npos ? line : line.substr(0, comma);
}

bool looks_like_header(const std::string& line) {
  double ignored;
  return !parse_double(first_field(line), &ignored);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::filesystem::path block_path(const std::filesystem::path& source,
                                 const std::filesystem::path& out_dir,
                                 int index) {
  char suffix[32];
  std::snprintf(suffix, sizeof suffix, "_block_%05d", index);
  return out_dir / (source.stem().string() + suffix +
                    source.extension().string());
}

}  // namespace

DatasetMeta read_binary_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  unsigned char header[kHeaderBytes];
  if (!in.read(reinterpret_cast<char*>(header), kHeaderBytes)) {
    throw HeaderMismatch(path.string() + ": file shorter than the header");
  }
  return unpack_header(header, path.string());
}

DatasetMeta infer_csv_meta(const std::filesystem::path& path,
                           bool has_response) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  DatasetMeta meta;
  meta.format = FileFormat::Csv;
  meta.has_response = has_response;
  meta.source = path.string();

  std::string line;
  std::int64_t line_no = 0;
  std::int64_t data_rows = 0;
  int fields = -1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (line_no == 1 && looks_like_header(line)) continue;
    if (fields < 0) {
      fields = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
    }
    ++data_rows;
  }
  if (fields < 0) throw FormatError(path.string() + ": no data rows");
  meta.n_rows = data_rows;
  meta.n_covariates = fields - (has_response ? 1 : 0);
  if (meta.n_covariates < 1) {
    throw FormatError(path.string() + ": rows have " + std::to_string(fields) +
                      " fields, too few for the declared response column");
  }
  return meta;
}

void write_dataset(const std::filesystem::path& path, FileFormat format,
                   const Matrix& z, const Vector* responses) {
  const std::int64_t n = z.rows();
  const int p = static_cast<int>(z.cols());
  if (responses != nullptr && responses->size() != n) {
    throw FormatError("response length does not match row count");
  }
  DatasetMeta meta;
  meta.n_rows = n;
  meta.n_covariates = p;
  meta.has_response = responses != nullptr;

  std::ofstream out(path, format == FileFormat::Binary
                              ? std::ios::binary | std::ios::trunc
                              : std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());

  if (format == FileFormat::Binary) {
    unsigned char header[kHeaderBytes];
    pack_header(header, meta);
    out.write(reinterpret_cast<const char*>(header), kHeaderBytes);
    std::vector<double> row(static_cast<std::size_t>(p) + (responses ? 1 : 0));
    for (std::int64_t i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = z(i, j);
      if (responses) row[static_cast<std::size_t>(p)] = (*responses)(i);
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(8 * row.size()));
    }
  } else {
    char buf[32];
    std::string line;
    for (std::int64_t i = 0; i < n; ++i) {
      line.clear();
      for (int j = 0; j < p; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", z(i, j));
        if (j > 0) line += ',';
        line += buf;
      }
      if (responses) {
        std::snprintf(buf, sizeof buf, "%.17g", (*responses)(i));
        line += ',';
        line += buf;
      }
      line += '\n';
      out << line;
    }
  }
  if (!out) throw IoFailure("write failed for " + path.string());
}

std::vector<std::filesystem::path> split(const std::filesystem::path& source,
                                         std::int64_t rows_per_block,
                                         const std::filesystem::path& out_dir,
                                         FileFormat format) {
  if (rows_per_block < 1) {
    throw OtherError("rows per block must be positive, got " +
                     std::to_string(rows_per_block));
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;

  if (format == FileFormat::Binary) {
    const DatasetMeta meta = read_binary_meta(source);
    std::ifstream in(source, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + source.string());
    in.seekg(kHeaderBytes);
    const std::size_t w = row_bytes(meta);
    std::vector<char> chunk(kCopyChunk);
    std::int64_t remaining = meta.n_rows;
    int index = 0;
    while (remaining > 0) {
      const std::int64_t n_b = std::min<std::int64_t>(remaining, rows_per_block);
      DatasetMeta block_meta = meta;
      block_meta.n_rows = n_b;
      const auto path = block_path(source, out_dir, index++);
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw IoFailure("cannot create " + path.string());
      unsigned char header[kHeaderBytes];
      pack_header(header, block_meta);
      out.write(reinterpret_cast<const char*>(header), kHeaderBytes);
      std::size_t bytes = static_cast<std::size_t>(n_b) * w;
      while (bytes > 0) {
        const std::size_t take = std::min(bytes, chunk.size());
        if (!in.read(chunk.data(), static_cast<std::streamsize>(take))) {
          throw FormatError(source.string() +
                            ": payload shorter than the header's row count");
        }
        out.write(chunk.data(), static_cast<std::streamsize>(take));
        bytes -= take;
      }
      if (!out) throw IoFailure("write failed for " + path.string());
      paths.push_back(path);
      remaining -= n_b;
    }
    return paths;
  }

  std::ifstream in(source);
  if (!in) throw IoFailure("cannot open " + source.string());
  std::string line;
  std::string header_line;
  bool saw_any = false;
  std::ofstream out;
  std::int64_t rows_in_block = 0;
  int index = 0;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (!saw_any) {
      saw_any = true;
      if (looks_like_header(line)) {
        header_line = line;
        continue;
      }
    }
    if (rows_in_block == 0) {
      const auto path = block_path(source, out_dir, index++);
      out.close();
      out.clear();
      out.open(path, std::ios::trunc);
      if (!out) throw IoFailure("cannot create " + path.string());
      if (!header_line.empty()) out << header_line << '\n';
      paths.push_back(path);
    }
    out << line << '\n';
    if (++rows_in_block == rows_per_block) rows_in_block = 0;
  }
  if (!saw_any) throw FormatError(source.string() + ": no data rows");
  return paths;
}

DataBlock read_block(const std::filesystem::path& path, const DatasetMeta& meta) {
  DataBlock block;
  const int p = meta.n_covariates;

  if (meta.format == FileFormat::Binary) {
    const DatasetMeta file_meta = read_binary_meta(path);
    if (file_meta.n_covariates != p || file_meta.has_response != meta.has_response) {
      throw HeaderMismatch(path.string() + ": header declares p = " +
                           std::to_string(file_meta.n_covariates) +
                           (file_meta.has_response ? " with" : " without") +
                           " responses, expected p = " + std::to_string(p) +
                           (meta.has_response ? " with" : " without") +
                           " responses");
    }
    const std::int64_t n = file_meta.n_rows;
    const std::size_t w = row_bytes(file_meta);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    in.seekg(kHeaderBytes);
    std::vector<double> payload(static_cast<std::size_t>(n) * (w / 8));
    if (n > 0 && !in.read(reinterpret_cast<char*>(payload.data()),
                          static_cast<std::streamsize>(payload.size() * 8))) {
      throw FormatError(path.string() +
                        ": payload shorter than the header's row count");
    }
    block.covariates.resize(n, p);
    if (meta.has_response) block.responses.resize(n);
    const std::size_t stride = w / 8;
    // Fill the column-major matrix in row tiles so the source tile stays
    // cache resident while each destination column gets sequential writes;
    // a straight row-by-row fill strides the whole matrix per value.
    constexpr std::int64_t kTile = 4096;
    for (std::int64_t i0 = 0; i0 < n; i0 += kTile) {
      const std::int64_t i1 = std::min(n, i0 + kTile);
      for (int j = 0; j < p; ++j) {
        double* dst = block.covariates.col(j).data();
        const double* src =
            payload.data() + static_cast<std::size_t>(i0) * stride + j;
        for (std::int64_t i = i0; i < i1; ++i, src += stride) dst[i] = *src;
      }
      if (meta.has_response) {
        const double* src =
            payload.data() + static_cast<std::size_t>(i0) * stride + p;
        for (std::int64_t i = i0; i < i1; ++i, src += stride) {
          block.responses(i) = *src;
        }
      }
    }
  } else {
    if (std::filesystem::file_size(path) >= 4) {
      std::ifstream sniff(path, std::ios::binary);
      char magic[4];
      if (sniff.read(magic, 4) && std::memcmp(magic, kMagic, 4) == 0) {
        throw HeaderMismatch(path.string() +
                             ": file has the binary magic, not CSV");
      }
    }
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    const int fields = p + (meta.has_response ? 1 : 0);
    std::vector<double> values;
    std::string line, token;
    std::int64_t line_no = 0;
    std::int64_t rows = 0;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      if (rows == 0 && values.empty() && looks_like_header(line)) continue;
      std::stringstream fields_in(line);
      int got = 0;
      while (std::getline(fields_in, token, ',')) {
        double v;
        if (!parse_double(token, &v)) {
          throw MalformedRow(line_no, "field '" + token + "' is not a number");
        }
        values.push_back(v);
        ++got;
      }
      if (got != fields) {
        throw MalformedRow(line_no, "expected " + std::to_string(fields) +
                                        " fields, got " + std::to_string(got));
      }
      ++rows;
    }
    block.covariates.resize(rows, p);
    if (meta.has_response) block.responses.resize(rows);
    for (std::int64_t i = 0; i < rows; ++i) {
      const double* row = values.data() + static_cast<std::size_t>(i) * fields;
      for (int j = 0; j < p; ++j) block.covariates(i, j) = row[j];
      if (meta.has_response) block.responses(i) = row[p];
    }
  }

  // Finiteness gate: selection and fitting assume clean data. The scan
  // only locates the offender after the vectorized check flags one.
  const std::int64_t n = block.rows();
  if (!block.covariates.allFinite()) {
    for (int j = 0; j < p; ++j) {
      for (std::int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(block.covariates(i, j))) throw NonFiniteValue(i, j);
      }
    }
  }
  if (meta.has_response && !block.responses.allFinite()) {
    for (std::int64_t i = 0; i < n; ++i) {
      if (!std::isfinite(block.responses(i))) throw NonFiniteValue(i, p);
    }
  }
  return block;
}

std::vector<std::filesystem::path> list_block_files(
    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> paths;
  if (!std::filesystem::is_directory(dir)) {
    throw OtherError(dir.string() + " is not a directory");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().stem().string().find("_block_") == std::string::npos) continue;
    paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw OtherError("no block files found in " + dir.string());
  return paths;
}

}  // namespace iboss
