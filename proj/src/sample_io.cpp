#include "sfs/sample_io.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace sfs {

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void write_samples_csv(std::ostream& os, const RowMatrix& samples, const SampleHeader& header) {
  os << "# sf-sampler v" << header.version << " seed=" << header.seed << " target=" << header.target << '\n';
  for (Eigen::Index k = 0; k < samples.cols(); ++k) os << (k ? "," : "") << 'y' << (k + 1);
  os << '\n';
  std::string line;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    line.clear();
    for (Eigen::Index k = 0; k < samples.cols(); ++k) {
      if (k) line += ',';
      line += format_double(samples(i, k));
    }
    line += '\n';
    os << line;
  }
}

RowMatrix read_samples_csv(std::istream& is, SampleHeader* header) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# sf-sampler v", 0) != 0) throw UsageError("sample CSV: missing header");
  if (header) {
    std::istringstream hs(line.substr(14));
    std::string tok;
    hs >> header->version;
    while (hs >> tok) {
      if (tok.rfind("seed=", 0) == 0) header->seed = std::stoull(tok.substr(5));
      if (tok.rfind("target=", 0) == 0) header->target = tok.substr(7);
    }
  }
  if (!std::getline(is, line)) throw UsageError("sample CSV: missing column row");
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    for (Eigen::Index k = 0; k < cols; ++k) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw UsageError("sample CSV: bad number on row " + std::to_string(rows + 1));
      values.push_back(v);
      p = res.ptr;
      if (k + 1 < cols) {
        if (p == end || *p != ',') throw UsageError("sample CSV: short row " + std::to_string(rows + 1));
        ++p;
      }
    }
    ++rows;
  }
  return Eigen::Map<RowMatrix>(values.data(), rows, cols);
}

void write_samples_binary(std::ostream& os, const RowMatrix& samples, const SampleHeader& header) {
  nlohmann::ordered_json j;
  j["format"] = "sf-sampler-samples";
  j["version"] = header.version;
  j["seed"] = header.seed;
  j["target"] = header.target;
  j["rows"] = samples.rows();
  j["cols"] = samples.cols();
  j["dtype"] = "float64";
  j["byte_order"] = "little";
  j["layout"] = "row-major";
  os << j.dump() << '\n';
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  std::vector<char> buf(static_cast<std::size_t>(samples.size()) * 8);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(samples.data()[i]);
    for (int b = 0; b < 8; ++b) buf[static_cast<std::size_t>(i) * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

RowMatrix read_samples_binary(std::istream& is, SampleHeader* header) {
  std::string line;
  if (!std::getline(is, line)) throw UsageError("sample binary: missing header line");
  Eigen::Index rows = 0, cols = 0;
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.value("format", "") != "sf-sampler-samples") throw UsageError("sample binary: unknown format");
    if (j.value("dtype", "") != "float64") throw UsageError("sample binary: dtype must be float64");
    if (j.value("byte_order", "") != "little") throw UsageError("sample binary: byte_order must be little");
    if (j.value("layout", "row-major") != "row-major") throw UsageError("sample binary: layout must be row-major");
    rows = j.at("rows").get<Eigen::Index>();
    cols = j.at("cols").get<Eigen::Index>();
    if (header) {
      header->version = j.value("version", "");
      header->seed = j.value("seed", std::uint64_t{0});
      header->target = j.value("target", "");
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("sample binary: bad header: ") + e.what());
  }
  if (rows < 0 || cols < 0) throw UsageError("sample binary: negative shape");
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows * cols) * 8);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw UsageError("sample binary: truncated payload");
  RowMatrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[static_cast<std::size_t>(i) * 8 + b]) << (8 * b);
    out.data()[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace sfs
