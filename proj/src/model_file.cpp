#include "kse/model_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "kse/io.hpp"

namespace kse {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    const char* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(v); }
  void bytes(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  void evaluations(const std::vector<Evaluation>& es) {
    u64(es.size());
    for (const auto& e : es) {
      f64(e.gamma);
      f64(e.sigma);
      f64(e.loss);
      put<std::uint8_t>(e.cached ? 1 : 0);
    }
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& s, std::size_t end) : s_(s), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  Eigen::Index index() {
    const std::uint64_t v = u64();
    if (v > (std::uint64_t{1} << 40)) throw DataError("model file: implausible size field");
    return static_cast<Eigen::Index>(v);
  }
  std::string bytes() {
    const auto n = static_cast<std::size_t>(index());
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  Eigen::MatrixXd matrix() {
    const Eigen::Index r = index();
    const Eigen::Index c = index();
    if (r != 0 && c > static_cast<Eigen::Index>((end_ - pos_) / 8) / r) {
      throw DataError("model file: matrix larger than the file");
    }
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  std::vector<Evaluation> evaluations() {
    const auto n = static_cast<std::size_t>(index());
    std::vector<Evaluation> out;
    for (std::size_t i = 0; i < n; ++i) {
      Evaluation e;
      e.gamma = f64();
      e.sigma = f64();
      e.loss = f64();
      e.cached = get<std::uint8_t>() != 0;
      out.push_back(e);
    }
    return out;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw DataError("model file: truncated payload");
  }
  const std::string& s_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::string serialize(const ModelFile& m) {
  const SubbandModel& sm = m.model;
  validate(sm.partition);
  if (sm.models.size() != sm.partition.bounds.size() || sm.tune_results.size() != sm.models.size()) {
    throw DataError("serialize: subband model is incomplete");
  }
  Writer w;
  w.str() += "EKSM";
  w.u32(kModelVersion);
  w.bytes(to_json(m.config));
  w.u64(static_cast<std::uint64_t>(m.features.stft.frame_len));
  w.u64(static_cast<std::uint64_t>(m.features.stft.hop));
  w.u32(static_cast<std::uint32_t>(m.features.stft.window));
  w.u64(static_cast<std::uint64_t>(m.features.context));
  w.f64(m.features.sample_rate);
  w.u32(static_cast<std::uint32_t>(m.mask));
  w.u64(static_cast<std::uint64_t>(m.standardizer.dim()));
  for (Eigen::Index i = 0; i < m.standardizer.dim(); ++i) w.f64(m.standardizer.mean[i]);
  for (Eigen::Index i = 0; i < m.standardizer.dim(); ++i) w.f64(m.standardizer.scale[i]);
  w.u64(static_cast<std::uint64_t>(sm.partition.n_channels));
  w.u64(sm.partition.bounds.size());
  for (const auto& [s, e] : sm.partition.bounds) {
    w.u64(static_cast<std::uint64_t>(s));
    w.u64(static_cast<std::uint64_t>(e));
  }

  // Subbands sharing one support matrix store it once.
  std::vector<const FeatureMatrix*> supports;
  std::vector<std::uint64_t> which;
  for (const auto& km : sm.models) {
    if (!km.support) throw DataError("serialize: subband without support points");
    auto it = std::find(supports.begin(), supports.end(), km.support.get());
    which.push_back(static_cast<std::uint64_t>(it - supports.begin()));
    if (it == supports.end()) supports.push_back(km.support.get());
  }
  w.u64(supports.size());
  for (const FeatureMatrix* s : supports) w.matrix(*s);
  for (std::size_t i = 0; i < sm.models.size(); ++i) {
    const KernelModel& km = sm.models[i];
    const TuneResult& t = sm.tune_results[i];
    w.f64(km.params.gamma);
    w.f64(km.params.sigma);
    w.u64(which[i]);
    w.f64(t.gamma_opt);
    w.f64(t.sigma_opt);
    w.evaluations(t.evaluations);
    w.evaluations(t.candidates);
    w.matrix(km.alpha);
  }
  w.u64(fnv1a(w.str()));
  return std::move(w.str());
}

ModelFile deserialize(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "EKSM") != 0) {
    throw DataError("model file: bad magic (not a model file)");
  }
  const std::size_t body = bytes.size() - 8;
  {
    Reader tail(bytes.substr(body), 8);
    if (tail.u64() != fnv1a(bytes.substr(0, body))) {
      throw DataError("model file: checksum mismatch (corrupt file)");
    }
  }
  Reader r(bytes, body);
  r.u32();  // magic
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw DataError("model file: unsupported version " + std::to_string(version));
  }
  ModelFile m;
  m.config = config_from_json(r.bytes());
  m.features.stft.frame_len = r.index();
  m.features.stft.hop = r.index();
  const std::uint32_t window = r.u32();
  if (window > static_cast<std::uint32_t>(Window::sqrt_hann)) throw DataError("model file: bad window id");
  m.features.stft.window = static_cast<Window>(window);
  m.features.context = r.index();
  m.features.sample_rate = r.f64();
  const std::uint32_t mask = r.u32();
  if (mask > 1) throw DataError("model file: bad mask kind");
  m.mask = static_cast<MaskKind>(mask);
  const Eigen::Index dim = r.index();
  m.standardizer.mean.resize(dim);
  m.standardizer.scale.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) m.standardizer.mean[i] = r.f64();
  for (Eigen::Index i = 0; i < dim; ++i) m.standardizer.scale[i] = r.f64();
  SubbandModel& sm = m.model;
  sm.partition.n_channels = r.index();
  const Eigen::Index b = r.index();
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index s = r.index();
    const Eigen::Index e = r.index();
    sm.partition.bounds.emplace_back(s, e);
  }
  validate(sm.partition);
  const Eigen::Index n_supports = r.index();
  std::vector<std::shared_ptr<const FeatureMatrix>> supports;
  for (Eigen::Index i = 0; i < n_supports; ++i) {
    supports.push_back(std::make_shared<const FeatureMatrix>(r.matrix()));
  }
  for (Eigen::Index i = 0; i < b; ++i) {
    KernelModel km;
    km.params.gamma = r.f64();
    km.params.sigma = r.f64();
    const auto which = static_cast<std::size_t>(r.index());
    if (which >= supports.size()) throw DataError("model file: bad support index");
    km.support = supports[which];
    TuneResult t;
    t.gamma_opt = r.f64();
    t.sigma_opt = r.f64();
    t.evaluations = r.evaluations();
    t.candidates = r.evaluations();
    km.alpha = r.matrix();
    if (km.alpha.rows() != km.support->rows() ||
        km.alpha.cols() != sm.partition.width(static_cast<std::size_t>(i))) {
      throw DataError("model file: coefficient shape mismatch in subband " + std::to_string(i));
    }
    if (km.support->cols() != dim) throw DataError("model file: support and standardizer dims differ");
    validate_params(km.params.gamma, km.params.sigma);
    sm.models.push_back(std::move(km));
    sm.tune_results.push_back(std::move(t));
  }
  if (!r.done()) throw DataError("model file: trailing bytes before checksum");
  return m;
}

void save_model(const std::string& path, const ModelFile& m) {
  write_file_atomic(path, serialize(m));
}

ModelFile load_model(const std::string& path) {
  return deserialize(read_file(path));
}

}  // namespace kse
