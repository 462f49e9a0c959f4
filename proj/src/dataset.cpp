#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "gpmix/error.hpp"
#include "gpmix/workbench.hpp"

namespace gpmix::workbench {

namespace {

[[noreturn]] void fail_at(const std::string &source, std::size_t line, const std::string &what) {
  std::ostringstream msg;
  msg << source << ":" << line << ": " << what;
  throw ValidationError(msg.str());
}

} // namespace

int ProfileDataset::label_index(std::size_t i) const {
  const std::string &label = labels[i];
  if (label == kUnknownLabel)
    return mixture::kUnlabelled;
  const auto it = std::find(niche_names.begin(), niche_names.end(), label);
  if (it == niche_names.end())
    throw ValidationError("label '" + label + "' is not a known niche");
  return static_cast<int>(it - niche_names.begin());
}

mixture::MixtureData ProfileDataset::to_mixture() const {
  mixture::MixtureData out;
  out.profiles = x;
  out.components = niches();
  out.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out.labels[i] = label_index(i);
  return out;
}

void ProfileDataset::validate(int min_markers) const {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0)
    throw ValidationError("dataset has no proteins");
  if (x.cols() < 2)
    throw ValidationError("dataset needs at least 2 fractions");
  if (ids.size() != n || labels.size() != n)
    throw ValidationError("dataset ids/labels do not match the profile matrix");
  if (!fraction_names.empty() && fraction_names.size() != static_cast<std::size_t>(x.cols()))
    throw ValidationError("dataset fraction names do not match the profile matrix");
  if (niche_names.empty())
    throw ValidationError("dataset has no labelled niches");
  if (!x.allFinite())
    throw ValidationError("dataset contains non-finite values");
  std::set<std::string> seen;
  for (const auto &id : ids)
    if (!seen.insert(id).second)
      throw ValidationError("duplicate protein id '" + id + "'");
  std::vector<int> counts(niche_names.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = label_index(i);
    if (k >= 0)
      ++counts[static_cast<std::size_t>(k)];
  }
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] < min_markers) {
      std::ostringstream msg;
      msg << "niche '" << niche_names[k] << "' has " << counts[k]
          << " labelled proteins; at least " << min_markers << " required";
      throw ValidationError(msg.str());
    }
  if (has_truth() && (true_component.size() != n || true_outlier.size() != n))
    throw ValidationError("ground truth does not match the profile matrix");
}

ProfileDataset parse_dataset(std::istream &in, const LoadOptions &opts, const std::string &source) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line))
    fail_at(source, 1, "missing header row");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
    line.erase(0, 3);
  const auto header = csv::split(line);
  if (header.size() < 4)
    fail_at(source, line_no, "header needs an id column, at least 2 fractions and a marker column");
  if (header.back() != "marker")
    fail_at(source, line_no, "last header column must be 'marker'");

  ProfileDataset ds;
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 1; j + 1 < header.size(); ++j)
    ds.fraction_names.emplace_back(header[j]);

  std::set<std::string> expected(opts.expected_niches.begin(), opts.expected_niches.end());
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty())
      continue;
    const auto fields = csv::split(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "expected " << header.size() << " fields, found " << fields.size();
      fail_at(source, line_no, msg.str());
    }
    if (fields.front().empty())
      fail_at(source, line_no, "missing protein id");
    for (std::size_t j = 1; j <= d; ++j) {
      double v = 0.0;
      if (fields[j].empty())
        fail_at(source, line_no, "missing value in column '" + ds.fraction_names[j - 1] + "'");
      if (!csv::parse_double(fields[j], v) || !std::isfinite(v))
        fail_at(source, line_no,
                "non-numeric value '" + std::string(fields[j]) + "' in column '" +
                    ds.fraction_names[j - 1] + "'");
      values.push_back(v);
    }
    const std::string marker(fields.back());
    if (marker.empty())
      fail_at(source, line_no, "missing marker label");
    if (!expected.empty() && marker != kUnknownLabel && !expected.count(marker))
      fail_at(source, line_no, "unknown niche '" + marker + "'");
    ds.ids.emplace_back(fields.front());
    ds.labels.push_back(marker);
  }
  if (ds.ids.empty())
    fail_at(source, line_no, "no data rows");

  const auto n = static_cast<Eigen::Index>(ds.ids.size());
  ds.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, static_cast<Eigen::Index>(d));

  if (!opts.expected_niches.empty()) {
    ds.niche_names = opts.expected_niches;
  } else {
    std::set<std::string> names;
    for (const auto &l : ds.labels)
      if (l != kUnknownLabel)
        names.insert(l);
    ds.niche_names.assign(names.begin(), names.end());
  }
  ds.validate();
  if (opts.center)
    center_profiles(ds);
  return ds;
}

ProfileDataset load_dataset(const std::filesystem::path &path, const LoadOptions &opts) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  return parse_dataset(in, opts, path.string());
}

void write_dataset(std::ostream &out, const ProfileDataset &ds) {
  out << "id";
  for (Eigen::Index j = 0; j < ds.fractions(); ++j)
    out << ','
        << (ds.fraction_names.empty() ? "f" + std::to_string(j + 1)
                                      : ds.fraction_names[static_cast<std::size_t>(j)]);
  out << ",marker\n";
  for (Eigen::Index i = 0; i < ds.proteins(); ++i) {
    out << ds.ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ds.fractions(); ++j)
      out << ',' << csv::format_double(ds.x(i, j));
    out << ',' << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

void save_dataset(const ProfileDataset &ds, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  write_dataset(out, ds);
  if (!out)
    throw IoError("write failed for " + path.string());
}

void save_truth(const ProfileDataset &ds, const std::filesystem::path &path) {
  if (!ds.has_truth())
    throw ValidationError("dataset carries no ground truth");
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << "id,component,outlier\n";
  for (std::size_t i = 0; i < ds.ids.size(); ++i) {
    const int k = ds.true_component[i];
    out << ds.ids[i] << ',' << (k >= 0 ? ds.niche_names[static_cast<std::size_t>(k)] : "outlier")
        << ',' << int(ds.true_outlier[i]) << '\n';
  }
  if (!out)
    throw IoError("write failed for " + path.string());
}

void center_profiles(ProfileDataset &ds) {
  const Eigen::RowVectorXd mean = ds.x.colwise().mean();
  ds.x.rowwise() -= mean;
}

void SimOptions::validate() const {
  if (components < 1)
    throw ValidationError("simulate: components must be >= 1");
  if (fractions < 2)
    throw ValidationError("simulate: fractions must be >= 2");
  if (per_component < 2)
    throw ValidationError("simulate: per_component must be >= 2");
  if (theta.size() != 1 && theta.size() != static_cast<std::size_t>(components))
    throw ValidationError("simulate: give one theta or one per component");
  for (const auto &h : theta)
    if (!h.finite())
      throw ValidationError("simulate: non-finite theta");
  if (!(eps >= 0.0 && eps < 1.0))
    throw ValidationError("simulate: eps must lie in [0, 1)");
  if (!(marker_fraction > 0.0 && marker_fraction <= 1.0))
    throw ValidationError("simulate: marker_fraction must lie in (0, 1]");
  if (!(outlier_scale > 0.0) || !std::isfinite(outlier_scale))
    throw ValidationError("simulate: outlier_scale must be positive");
}

ComponentDraw draw_component(const GpHypers &h, int fractions, int n, Rng &rng) {
  const gp::FractionGrid grid(fractions);
  const Eigen::MatrixXd a = gp::kernel_toeplitz(grid, h).dense();
  // Eigen square root: the squared-exponential kernel is often numerically
  // singular, where a Cholesky factor would fail.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  ComponentDraw out;
  out.mu = eig.eigenvectors() * root.cwiseProduct(standard_normal_vector(rng, fractions));
  const double sd = std::sqrt(h.noise_var());
  out.x.resize(fractions, n);
  for (int j = 0; j < n; ++j)
    out.x.col(j) = out.mu + sd * standard_normal_vector(rng, fractions);
  return out;
}

Simulation simulate(const SimOptions &opts) {
  opts.validate();
  Rng rng = make_rng(opts.seed, 0);
  const int kc = opts.components;
  const int d = opts.fractions;
  const int per = opts.per_component;
  const int n = kc * per;

  Simulation sim;
  ProfileDataset &ds = sim.data;
  for (int k = 0; k < kc; ++k)
    ds.niche_names.push_back("C" + std::to_string(k + 1));
  for (int j = 0; j < d; ++j)
    ds.fraction_names.push_back("f" + std::to_string(j + 1));

  // Shuffled row order so components are interleaved in the file.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  ds.x.resize(n, d);
  ds.ids.resize(static_cast<std::size_t>(n));
  ds.labels.assign(static_cast<std::size_t>(n), kUnknownLabel);
  ds.true_component.assign(static_cast<std::size_t>(n), 0);
  ds.true_outlier.assign(static_cast<std::size_t>(n), 0);

  const int markers = std::clamp(static_cast<int>(std::lround(opts.marker_fraction * per)), 2, per);
  for (int k = 0; k < kc; ++k) {
    const GpHypers &h = opts.theta.size() == 1 ? opts.theta[0] : opts.theta[static_cast<std::size_t>(k)];
    ComponentDraw draw = draw_component(h, d, per, rng);
    sim.functions.push_back(draw.mu);

    std::vector<int> members(static_cast<std::size_t>(per));
    std::iota(members.begin(), members.end(), 0);
    if (opts.markers == MarkerSelection::low_noise) {
      Eigen::VectorXd resid = (draw.x.colwise() - draw.mu).colwise().squaredNorm().transpose();
      std::stable_sort(members.begin(), members.end(),
                       [&](int a, int b) { return resid[a] < resid[b]; });
      const int half = std::max(markers, (per + 1) / 2);
      std::shuffle(members.begin(), members.begin() + half, rng);
    } else {
      std::shuffle(members.begin(), members.end(), rng);
    }
    std::vector<bool> is_marker(static_cast<std::size_t>(per), false);
    for (int m = 0; m < markers; ++m)
      is_marker[static_cast<std::size_t>(members[static_cast<std::size_t>(m)])] = true;

    for (int j = 0; j < per; ++j) {
      const auto row = static_cast<std::size_t>(order[static_cast<std::size_t>(k * per + j)]);
      ds.x.row(static_cast<Eigen::Index>(row)) = draw.x.col(j).transpose();
      ds.true_component[row] = k;
      if (is_marker[static_cast<std::size_t>(j)])
        ds.labels[row] = ds.niche_names[static_cast<std::size_t>(k)];
    }
  }

  std::vector<std::size_t> unlabelled;
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] == kUnknownLabel)
      unlabelled.push_back(i);
  const auto n_out = static_cast<std::size_t>(std::lround(opts.eps * static_cast<double>(unlabelled.size())));
  if (n_out > 0) {
    Eigen::VectorXd centre = Eigen::VectorXd::Zero(d);
    for (const auto &mu : sim.functions)
      centre += mu;
    centre /= kc;
    double ss = 0.0;
    for (const auto &mu : sim.functions)
      ss += (mu - centre).squaredNorm();
    double spread = std::sqrt(ss / (static_cast<double>(kc) * d));
    if (!(spread > 0.0))
      spread = 1.0;
    const double scale = opts.outlier_scale * spread;
    const double kappa = 4.0;
    std::shuffle(unlabelled.begin(), unlabelled.end(), rng);
    for (std::size_t o = 0; o < n_out; ++o) {
      const std::size_t i = unlabelled[o];
      const double w = gamma_draw(rng, kappa / 2.0) / (kappa / 2.0);
      ds.x.row(static_cast<Eigen::Index>(i)) =
          (centre + scale * standard_normal_vector(rng, d) / std::sqrt(w)).transpose();
      ds.true_component[i] = -1;
      ds.true_outlier[i] = 1;
    }
  }

  char buf[16];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "P%05d", i + 1);
    ds.ids[static_cast<std::size_t>(i)] = buf;
  }
  ds.validate();
  return sim;
}

double quadratic_loss(std::span<const double> pred, int truth) {
  if (pred.empty())
    throw ValidationError("quadratic_loss: empty prediction");
  if (truth < 0 || static_cast<std::size_t>(truth) >= pred.size())
    throw ValidationError("quadratic_loss: truth index out of range");
  double total = 0.0;
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double p = pred[k];
    if (!std::isfinite(p) || p < -1e-12)
      throw ValidationError("quadratic_loss: prediction is not a probability vector");
    total += p;
    const double e = p - (static_cast<int>(k) == truth ? 1.0 : 0.0);
    loss += e * e;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw ValidationError("quadratic_loss: prediction does not sum to one");
  return loss;
}

} // namespace gpmix::workbench
