#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "evfilter/error.hpp"
#include "evfilter/nn.hpp"

namespace evf::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'V', 'M', '1'};
constexpr std::uint32_t kVersion = 1;
// Sanity bound on any stored dimension; larger values mean a corrupt file.
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::istream& in, const std::string& source) : in_(in), source_(source) {}

  template <typename T>
  T get(const char* what) {
    T v{};
    if (!in_.read(reinterpret_cast<char*>(&v), sizeof v)) fail(std::string("truncated while reading ") + what);
    return v;
  }

  std::uint64_t dim(const char* what) {
    const auto v = get<std::uint64_t>(what);
    if (v > kMaxDim) fail(std::string("implausible ") + what + " " + std::to_string(v));
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) { throw DataError(source_ + ": " + msg); }
  std::istream& stream() { return in_; }

 private:
  std::istream& in_;
  const std::string& source_;
};

}  // namespace

void write_checkpoint(std::ostream& out, const TrainedModel& model) {
  const auto shapes = model.spec.tensor_shapes();
  if (shapes.size() != model.parameters.size()) throw std::invalid_argument("checkpoint: parameter count does not match spec");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.precision));
  put<std::uint64_t>(out, model.spec.input_dim);
  put<std::uint64_t>(out, model.spec.classes);
  put<std::uint64_t>(out, model.spec.hidden.size());
  for (auto h : model.spec.hidden) put<std::uint64_t>(out, h);
  put<std::uint64_t>(out, model.best_epoch);
  put<std::uint64_t>(out, model.parameters.size());
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto& p = model.parameters[k];
    if (p.rows() != shapes[k].first || p.cols() != shapes[k].second)
      throw std::invalid_argument("checkpoint: tensor shape does not match spec");
    put<std::uint64_t>(out, p.rows());
    put<std::uint64_t>(out, p.cols());
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!out) throw DataError("checkpoint write failed");
}

void write_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, model);
}

TrainedModel read_checkpoint(std::istream& in, const std::string& source) {
  Reader r(in, source);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) r.fail("not an EVM1 model checkpoint");
  if (const auto v = r.get<std::uint32_t>("version"); v != kVersion) r.fail("unsupported checkpoint version " + std::to_string(v));
  TrainedModel model;
  const auto kind = r.get<std::uint32_t>("model kind");
  if (kind > static_cast<std::uint32_t>(ModelKind::nsage_lin)) r.fail("unknown model kind " + std::to_string(kind));
  model.spec.kind = static_cast<ModelKind>(kind);
  const auto precision = r.get<std::uint32_t>("precision");
  if (precision > 1) r.fail("unknown precision " + std::to_string(precision));
  model.precision = static_cast<Precision>(precision);
  model.spec.input_dim = r.dim("input dimension");
  model.spec.classes = r.dim("class count");
  const auto layers = r.dim("hidden layer count");
  if (layers > 64) r.fail("implausible hidden layer count");
  for (std::uint64_t l = 0; l < layers; ++l) model.spec.hidden.push_back(r.dim("hidden width"));
  model.best_epoch = r.get<std::uint64_t>("best epoch");
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  try {
    shapes = model.spec.tensor_shapes();
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("invalid model spec: ") + e.what());
  }
  if (r.dim("tensor count") != shapes.size()) r.fail("tensor count does not match the model spec");
  for (const auto& [rows, cols] : shapes) {
    const auto rr = r.dim("tensor rows");
    const auto cc = r.dim("tensor cols");
    if (rr != rows || cc != cols) r.fail("tensor shape does not match the model spec");
    Matrix<double> m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      r.fail("truncated tensor data");
    model.parameters.push_back(std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after the last tensor");
  return model;
}

TrainedModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace evf::nn
