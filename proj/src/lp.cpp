#include "ramp/lp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "ramp/errors.hpp"

namespace ramp {

std::string to_string(AttackNorm norm) {
    switch (norm) {
        case AttackNorm::L1: return "l1";
        case AttackNorm::L2: return "l2";
        case AttackNorm::Linf: return "linf";
    }
    return "?";
}

AttackNorm attack_norm_from_string(const std::string& s) {
    if (s == "l1" || s == "L1" || s == "1") return AttackNorm::L1;
    if (s == "l2" || s == "L2" || s == "2") return AttackNorm::L2;
    if (s == "linf" || s == "Linf" || s == "inf") return AttackNorm::Linf;
    throw std::invalid_argument("unknown attack norm: " + s);
}

double lp_norm(std::span<const double> v, AttackNorm norm) {
    switch (norm) {
        case AttackNorm::L1: {
            double s = 0.0;
            for (double x : v) s += std::fabs(x);
            return s;
        }
        case AttackNorm::L2: {
            double s = 0.0;
            for (double x : v) s += x * x;
            return std::sqrt(s);
        }
        case AttackNorm::Linf: {
            double m = 0.0;
            for (double x : v) m = std::max(m, std::fabs(x));
            return m;
        }
    }
    return 0.0;
}

// feasibility slack keeps re-projection of a boundary point bit-identical
constexpr double kFeasSlack = 1.0 + 1e-12;

std::vector<double> project_l2(std::vector<double> v, double eps) {
    const double n = lp_norm(v, AttackNorm::L2);
    if (n <= eps * kFeasSlack || n == 0.0) return v;
    const double s = eps / n;
    for (double& x : v) x *= s;
    return v;
}

std::vector<double> project_linf(std::vector<double> v, double eps) {
    for (double& x : v) x = std::clamp(x, -eps, eps);
    return v;
}

std::vector<double> project_l1(std::vector<double> v, double eps) {
    if (lp_norm(v, AttackNorm::L1) <= eps * kFeasSlack) return v;
    std::vector<double> mags(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) mags[i] = std::fabs(v[i]);
    std::sort(mags.begin(), mags.end(), std::greater<double>());
    double cumsum = 0.0;
    double theta = 0.0;
    std::size_t rho = 0;
    for (std::size_t j = 0; j < mags.size(); ++j) {
        cumsum += mags[j];
        const double t = (cumsum - eps) / static_cast<double>(j + 1);
        if (mags[j] - t > 0.0) {
            rho = j + 1;
            theta = t;
        }
    }
    (void)rho;
    for (double& x : v) {
        const double m = std::fabs(x) - theta;
        x = m > 0.0 ? (x > 0.0 ? m : -m) : 0.0;
    }
    return v;
}

std::vector<double> project_norm(std::vector<double> v, AttackNorm norm, double eps) {
    switch (norm) {
        case AttackNorm::L1: return project_l1(std::move(v), eps);
        case AttackNorm::L2: return project_l2(std::move(v), eps);
        case AttackNorm::Linf: return project_linf(std::move(v), eps);
    }
    return v;
}

Tensor project_ball_box(const Tensor& x_adv, const BallSpec& ball) {
    if (ball.eps <= 0.0) throw std::invalid_argument("ball eps must be > 0");
    if (x_adv.shape() != ball.center.shape()) {
        throw ShapeError("project_ball_box: point shape " + shape_str(x_adv.shape()) +
                         " vs center " + shape_str(ball.center.shape()));
    }
    const std::size_t n = x_adv.shape().size() == 2 ? x_adv.rows() : 1;
    const std::size_t d = x_adv.size() / n;
    const auto& cv = ball.center.values();
    std::vector<double> out = x_adv.values();

    const int rounds = (ball.norm == AttackNorm::Linf) ? 1 : 10;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * d;
        const double* c = cv.data() + i * d;
        for (int r = 0; r < rounds; ++r) {
            std::vector<double> delta(d);
            for (std::size_t j = 0; j < d; ++j) delta[j] = row[j] - c[j];
            delta = project_norm(std::move(delta), ball.norm, ball.eps);
            for (std::size_t j = 0; j < d; ++j) {
                row[j] = std::clamp(c[j] + delta[j], ball.box_lo, ball.box_hi);
            }
        }
    }
    return Tensor::from_data(x_adv.shape(), std::move(out), false);
}

double log_ball_volume(AttackNorm norm, std::size_t d, double eps) {
    if (d == 0) throw std::invalid_argument("dimension must be >= 1");
    if (eps <= 0.0) throw std::invalid_argument("eps must be > 0");
    const double dd = static_cast<double>(d);
    switch (norm) {
        case AttackNorm::Linf:
            // p -> inf limit of the lgamma form
            return dd * std::log(2.0 * eps);
        case AttackNorm::L1:
            return dd * std::log(2.0) - std::lgamma(1.0 + dd) + dd * std::log(eps);
        case AttackNorm::L2:
            return dd * (std::log(2.0) + std::lgamma(1.5)) - std::lgamma(1.0 + dd / 2.0) +
                   dd * std::log(eps);
    }
    return 0.0;
}

std::pair<AttackNorm, AttackNorm> select_key_pair(
    double eps1, double eps2, double epsinf, std::size_t d,
    std::optional<std::pair<AttackNorm, AttackNorm>> override_pair) {
    if (override_pair) return *override_pair;
    if (eps1 <= 0.0 || eps2 <= 0.0 || epsinf <= 0.0) {
        throw std::invalid_argument("all eps must be > 0");
    }
    struct Entry {
        AttackNorm norm;
        double logvol;
        int tie_rank;  // Linf > L2 > L1 on equal volumes
    };
    std::array<Entry, 3> entries = {{
        {AttackNorm::Linf, log_ball_volume(AttackNorm::Linf, d, epsinf), 0},
        {AttackNorm::L2, log_ball_volume(AttackNorm::L2, d, eps2), 1},
        {AttackNorm::L1, log_ball_volume(AttackNorm::L1, d, eps1), 2},
    }};
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.logvol != b.logvol) return a.logvol > b.logvol;
        return a.tie_rank < b.tie_rank;
    });
    return {entries[0].norm, entries[1].norm};
}

}  // namespace ramp
