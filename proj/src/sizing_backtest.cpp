#include "sizing_backtest.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace curvecast {

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::Base: return "base";
        case StrategyKind::RlsdVol: return "rlsd-vol";
        case StrategyKind::Alea: return "alea";
        case StrategyKind::AlEp: return "al-ep";
    }
    return "?";
}

StrategyKind strategy_from_string(const std::string& s) {
    if (s == "base") return StrategyKind::Base;
    if (s == "rlsd-vol") return StrategyKind::RlsdVol;
    if (s == "alea") return StrategyKind::Alea;
    if (s == "al-ep") return StrategyKind::AlEp;
    throw ConfigError("unknown strategy kind: " + s);
}

void StrategySpec::validate() const {
    if (threshold < 0) throw ConfigError("strategy: threshold must be non-negative");
    if (sigma_ref <= 0) throw ConfigError("strategy: sigma_ref must be positive");
    if (mu_ref <= 0) throw ConfigError("strategy: mu_ref must be positive");
    if (clip && *clip <= 0) throw ConfigError("strategy: clip bound must be positive");
}

double size_position(double mu, double sigma, const StrategySpec& spec) {
    if (std::abs(mu) < spec.threshold) return 0.0;
    if (spec.kind == StrategyKind::Base) return mu > 0 ? 1.0 : -1.0;
    // Epistemic-only sigma can collapse to ~0 and blow alpha up; the guard
    // is the reason an epistemic-only strategy kind does not exist here.
    if (sigma <= 0) throw NumericError("size_position: sigma must be positive");
    double alpha = spec.gain() * mu / (sigma * sigma);
    if (spec.clip) alpha = std::clamp(alpha, -*spec.clip, *spec.clip);
    return alpha;
}

double TradeLedger::total_volume() const {
    double v = 0;
    for (const auto& r : records) v += std::abs(r.delta_position);
    return v;
}

double TradeLedger::total_cost() const {
    double c = 0;
    for (const auto& d : days) c += d.cost;
    return c;
}

double TradeLedger::total_gross() const {
    double g = 0;
    for (const auto& d : days) g += d.gross;
    return g;
}

TradeLedger run_backtest(const std::vector<PredictionEvent>& events, const StrategySpec& spec,
                         const CostSpec& cost) {
    spec.validate();
    if (cost.multiple < 0) throw ConfigError("cost multiple must be >= 0");
    TradeLedger ledger;
    ledger.spec = spec;
    ledger.cost = cost;
    const double cost_rate = cost.element_bps * cost.multiple;

    const int C = events.empty() ? 0 : static_cast<int>(events[0].pred_delta.size());
    Vec pos = Vec::Zero(C);
    int64_t cur_day = std::numeric_limits<int64_t>::min();
    TradeLedger::DayRow* day = nullptr;

    auto flatten = [&](int64_t ts) {
        if (!day) return;
        for (int c = 0; c < C; ++c) {
            if (pos[c] == 0.0) continue;
            LedgerRecord r;
            r.anchor_time = ts;
            r.day_id = day->day_id;
            r.month_id = day->month_id;
            r.contract = c;
            r.delta_position = -pos[c];
            r.cost = cost_rate * std::abs(pos[c]);
            r.is_flatten = true;
            day->volume += std::abs(pos[c]);
            day->cost += r.cost;
            ledger.records.push_back(r);
            pos[c] = 0.0;
        }
    };

    int64_t last_ts = 0;
    for (const auto& ev : events) {
        if (ev.day_id < cur_day || (ev.day_id == cur_day && ev.anchor_time < last_ts))
            throw DataError("run_backtest: events not ordered by (day, time)");
        if (ev.day_id != cur_day) {
            flatten(last_ts);
            cur_day = ev.day_id;
            ledger.days.push_back({ev.day_id, ev.month_id, 0, 0, 0});
            day = &ledger.days.back();
        }
        last_ts = ev.anchor_time;
        if (ev.realized_delta.size() != C) {
            ++ledger.skipped_events;
            continue;
        }
        for (int c = 0; c < C; ++c) {
            double sigma = 0.0;
            switch (spec.kind) {
                case StrategyKind::Base: sigma = 0.0; break;
                case StrategyKind::RlsdVol: sigma = ev.rlsd_vol[c]; break;
                case StrategyKind::Alea: sigma = ev.sigma_alea[c]; break;
                case StrategyKind::AlEp: sigma = ev.sigma_alep[c]; break;
            }
            double target;
            if (spec.kind != StrategyKind::Base && sigma <= 0 &&
                std::abs(ev.pred_delta[c]) >= spec.threshold) {
                ++ledger.sigma_guard_skips;
                target = 0.0;
            } else {
                target = size_position(ev.pred_delta[c], sigma, spec);
            }
            LedgerRecord r;
            r.anchor_time = ev.anchor_time;
            r.day_id = ev.day_id;
            r.month_id = ev.month_id;
            r.contract = c;
            r.pred_delta = ev.pred_delta[c];
            r.sigma_used = spec.kind == StrategyKind::Base ? 0.0 : sigma;
            r.alpha = target;
            r.delta_position = target - pos[c];
            r.realized_delta = ev.realized_delta[c];
            r.gross_pnl = target * ev.realized_delta[c];
            r.cost = cost_rate * std::abs(r.delta_position);
            day->gross += r.gross_pnl;
            day->cost += r.cost;
            day->volume += std::abs(r.delta_position);
            ledger.records.push_back(r);
            pos[c] = target;
        }
    }
    flatten(last_ts);
    return ledger;
}

std::optional<double> sharpe(const std::vector<double>& daily_returns) {
    const size_t n = daily_returns.size();
    if (n < 2) return std::nullopt;
    double mean = 0;
    for (double r : daily_returns) mean += r;
    mean /= static_cast<double>(n);
    double ss = 0;
    for (double r : daily_returns) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0) return std::nullopt;
    return mean / sd;
}

std::vector<double> daily_net_returns(const TradeLedger& ledger) {
    std::vector<double> out;
    out.reserve(ledger.days.size());
    for (const auto& d : ledger.days) out.push_back(d.net());
    return out;
}

std::vector<double> daily_net_returns(const TradeLedger& ledger, int month_id) {
    std::vector<double> out;
    for (const auto& d : ledger.days)
        if (d.month_id == month_id) out.push_back(d.net());
    return out;
}

double portfolio_sharpe(const Vec& alphas, const Vec& mus, const Vec& sigmas) {
    const double num = alphas.dot(mus);
    const double den = std::sqrt((alphas.array().square() * sigmas.array().square()).sum());
    return num / den;
}

bool alpha_optimality_check(const Vec& mus, const Vec& sigmas, double eps) {
    const Eigen::Index n = mus.size();
    if ((mus.array() <= 0).any() || (sigmas.array() <= 0).any())
        throw ConfigError("alpha_optimality_check assumes strictly positive mu, sigma");
    if (n == 1) return true;  // S is invariant in alpha > 0
    const Vec star = mus.array() / sigmas.array().square();
    const double s_star = portfolio_sharpe(star, mus, sigmas);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (double d : {eps, -eps}) {
            Vec a = star;
            a[i] += d;
            if (portfolio_sharpe(a, mus, sigmas) >= s_star) return false;
        }
    }
    return true;
}

std::vector<CalibrationRow> calibration_report(const TradeLedger& ledger) {
    // Traded entries only; flatten rows and Base ledgers (sigma_used = 0)
    // contribute nothing.
    std::map<std::pair<int, char>, std::vector<double>> ratios;
    std::map<std::pair<int, char>, std::map<int64_t, double>> day_pnl;
    for (const auto& r : ledger.records) {
        if (r.is_flatten || r.alpha == 0.0 || r.sigma_used <= 0) continue;
        const char side = r.alpha > 0 ? 'L' : 'S';
        ratios[{r.month_id, side}].push_back(std::abs(r.pred_delta) / r.sigma_used);
        day_pnl[{r.month_id, side}][r.day_id] += r.gross_pnl - r.cost;
    }
    std::vector<CalibrationRow> rows;
    for (auto& [key, v] : ratios) {
        CalibrationRow row;
        row.month_id = key.first;
        row.side = key.second;
        std::sort(v.begin(), v.end());
        const size_t m = v.size();
        row.median_reward_risk = m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
        std::vector<double> daily;
        for (const auto& [day, pnl] : day_pnl[key]) daily.push_back(pnl);
        auto s = sharpe(daily);
        if (s) row.realized_sharpe = key.second == 'S' ? -*s : *s;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace curvecast
