#include "noisyens/noise.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace noisyens {

namespace {

void validate_spec(const NoiseProfileSpec& spec) {
  if (!(spec.snr > 0.0)) throw ConfigError("noise profile: snr must be positive");
  if (!(spec.eps_y > 0.0)) throw ConfigError("noise profile: eps_y must be positive");
  if (spec.kind == NoiseProfileSpec::Kind::NoisierSubset && spec.m < 2) {
    throw ConfigError("noise profile: noisier-subset needs m >= 2");
  }
  if (spec.kind != NoiseProfileSpec::Kind::EquiVariance && !(spec.a > 1.0)) {
    throw ConfigError("noise profile: factor a must exceed 1");
  }
}

bool is_diagonal(const Matrix& m) {
  return m.isDiagonal(0.0);
}

}  // namespace

NoiseModel build_noise_profile(const NoiseProfileSpec& spec, int T) {
  validate_spec(spec);
  if (T < 1) throw ConfigError("noise profile: T must be at least 1");

  Vector diag(T);
  switch (spec.kind) {
    case NoiseProfileSpec::Kind::EquiVariance: {
      diag.setConstant(spec.eps_y / spec.snr);
      break;
    }
    case NoiseProfileSpec::Kind::NoisierSubset: {
      // One a-factor channel every m positions starting at index 1; sigma^2
      // is derived from the realized noisy count so the trace identity holds
      // exactly for every T.
      int noisy = 0;
      for (int t = 1; t < T; t += spec.m) ++noisy;
      const double denom = static_cast<double>(T - noisy) + spec.a * noisy;
      const double sigma2 = static_cast<double>(T) * spec.eps_y / (denom * spec.snr);
      diag.setConstant(sigma2);
      for (int t = 1; t < T; t += spec.m) diag(t) = spec.a * sigma2;
      break;
    }
    case NoiseProfileSpec::Kind::SingleNoisy: {
      const double sigma1 =
          static_cast<double>(T) * spec.eps_y /
          ((1.0 + static_cast<double>(T - 1) / spec.a) * spec.snr);
      diag.setConstant(sigma1 / spec.a);
      diag(0) = sigma1;
      break;
    }
  }

  NoiseModel model(Matrix(diag.asDiagonal()));
  model.profile = spec;
  model.has_profile = true;
  return model;
}

double snr_db(double snr_linear) {
  if (!(snr_linear > 0.0)) throw ConfigError("snr_db: snr must be positive");
  return 10.0 * std::log10(snr_linear);
}

double snr_from_db(double db) { return std::pow(10.0, db / 10.0); }

NoiseSampler::NoiseSampler(const NoiseModel& model) {
  const Matrix& cov = model.cov;
  if (cov.rows() != cov.cols()) throw DimensionError("NoiseSampler: covariance not square");
  if (cov.isZero(0.0)) {
    zero_ = true;
    scale_ = Vector::Zero(cov.rows());
    return;
  }
  if (is_diagonal(cov)) {
    if (cov.diagonal().minCoeff() < 0.0) {
      throw NumericalError("NoiseSampler: negative channel variance");
    }
    scale_ = cov.diagonal().cwiseSqrt();
    return;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw NumericalError("NoiseSampler: covariance not positive semidefinite");
  }
  const Vector clipped = es.eigenvalues().cwiseMax(0.0);
  factor_ = es.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
}

void NoiseSampler::draw_into(CounterRng& rng, Vector& out) const {
  const Eigen::Index t = size();
  out.resize(t);
  if (zero_) {
    out.setZero();
    return;
  }
  if (scale_.size() > 0) {
    for (Eigen::Index i = 0; i < t; ++i) out(i) = scale_(i) * rng.next_gauss();
    return;
  }
  Vector z(t);
  for (Eigen::Index i = 0; i < t; ++i) z(i) = rng.next_gauss();
  out.noalias() = factor_ * z;
}

Vector NoiseSampler::draw(CounterRng& rng) const {
  Vector out;
  draw_into(rng, out);
  return out;
}

Vector sample_noise(const NoiseModel& model, CounterRng& rng) {
  return NoiseSampler(model).draw(rng);
}

NoiseProfileSpec profile_from_string(const std::string& text) {
  NoiseProfileSpec spec;
  std::string head = text;
  std::string params;
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    head = text.substr(0, colon);
    params = text.substr(colon + 1);
  }
  if (head == "equi-variance") {
    spec.kind = NoiseProfileSpec::Kind::EquiVariance;
  } else if (head == "noisier-subset") {
    spec.kind = NoiseProfileSpec::Kind::NoisierSubset;
  } else if (head == "single-noisy") {
    spec.kind = NoiseProfileSpec::Kind::SingleNoisy;
  } else {
    throw ConfigError("profile: unknown kind '" + head + "'");
  }

  std::stringstream ss(params);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("profile: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    try {
      if (key == "m") {
        spec.m = std::stoi(value);
      } else if (key == "a") {
        spec.a = std::stod(value);
      } else {
        throw ConfigError("profile: unknown parameter '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("profile: bad value for '" + key + "'");
    }
  }
  return spec;
}

std::string profile_to_string(const NoiseProfileSpec& spec) {
  std::ostringstream out;
  switch (spec.kind) {
    case NoiseProfileSpec::Kind::EquiVariance:
      out << "equi-variance";
      break;
    case NoiseProfileSpec::Kind::NoisierSubset:
      out << "noisier-subset:m=" << spec.m << ",a=" << spec.a;
      break;
    case NoiseProfileSpec::Kind::SingleNoisy:
      out << "single-noisy:a=" << spec.a;
      break;
  }
  return out.str();
}

}  // namespace noisyens
