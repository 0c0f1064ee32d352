#include "cpquant/laws.hpp"

namespace cpquant {

std::string to_string(ErrorLaw law) {
  switch (law) {
    case ErrorLaw::normal: return "normal";
    case ErrorLaw::laplace: return "laplace";
    case ErrorLaw::cauchy: return "cauchy";
    case ErrorLaw::none: return "none";
  }
  return "?";
}

ErrorLaw error_law_from_string(const std::string& s) {
  if (s == "normal") return ErrorLaw::normal;
  if (s == "laplace") return ErrorLaw::laplace;
  if (s == "cauchy") return ErrorLaw::cauchy;
  if (s == "none") return ErrorLaw::none;
  throw std::invalid_argument("unknown error law: " + s);
}

namespace laws {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  }
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against the exact CDF.
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace laws

double error_pdf(ErrorLaw law, double x) {
  switch (law) {
    case ErrorLaw::normal: return laws::normal_pdf(x);
    case ErrorLaw::laplace: return laws::laplace_pdf(x);
    case ErrorLaw::cauchy: return laws::cauchy_pdf(x);
    case ErrorLaw::none: break;
  }
  throw std::invalid_argument("error_pdf: degenerate law has no density");
}

double error_cdf(ErrorLaw law, double x) {
  switch (law) {
    case ErrorLaw::normal: return laws::normal_cdf(x);
    case ErrorLaw::laplace: return laws::laplace_cdf(x);
    case ErrorLaw::cauchy: return laws::cauchy_cdf(x);
    case ErrorLaw::none: return x < 0.0 ? 0.0 : 1.0;
  }
  throw std::invalid_argument("error_cdf: unknown law");
}

double error_quantile(ErrorLaw law, double p) {
  switch (law) {
    case ErrorLaw::normal: return laws::normal_quantile(p);
    case ErrorLaw::laplace: return laws::laplace_quantile(p);
    case ErrorLaw::cauchy: return laws::cauchy_quantile(p);
    case ErrorLaw::none: return 0.0;
  }
  throw std::invalid_argument("error_quantile: unknown law");
}

double sample_error(ErrorLaw law, Rng& rng) {
  if (law == ErrorLaw::none) return 0.0;
  return error_quantile(law, rng.uniform());
}

}  // namespace cpquant
