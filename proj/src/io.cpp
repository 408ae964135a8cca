#include "flowlab/io.hpp"
#include "flowlab/error.hpp"

#include <cstdio>
#include <charconv>
#include <map>
#include <unordered_set>

namespace flowlab {

namespace fs = std::filesystem;

std::string format_double(double x) {
    if (is_missing(x)) return {};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------

CsvReader::CsvReader(const fs::path& path) : name_(path.string()), in_(path) {
    if (!in_) throw IoError("cannot open " + name_);
    std::string line;
    if (!std::getline(in_, line)) throw ValidationError(name_ + ": empty file, header row expected");
    ++line_;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    split(line);
    header_ = fields_;
}

std::optional<std::size_t> CsvReader::find_column(const std::string& name) const {
    for (std::size_t k = 0; k < header_.size(); ++k)
        if (header_[k] == name) return k;
    return std::nullopt;
}

std::size_t CsvReader::column(const std::string& name) const {
    auto k = find_column(name);
    if (!k) throw ValidationError(name_ + ": missing required column '" + name + "'");
    return *k;
}

void CsvReader::split(const std::string& line) {
    fields_.clear();
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields_.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields_.push_back(std::move(cur));
}

bool CsvReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        if (line.empty() || line == "\r") continue;
        split(line);
        if (fields_.size() != header_.size())
            throw ValidationError(name_ + " line " + std::to_string(line_) + ": expected " + std::to_string(header_.size()) +
                                  " fields, found " + std::to_string(fields_.size()));
        return true;
    }
    return false;
}

double CsvReader::number(std::size_t k) const {
    const std::string& s = fields_[k];
    if (s.empty() || s == "NA" || s == "NaN" || s == "nan") return kMissing;
    double x = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ValidationError(name_ + " line " + std::to_string(line_) + ", column '" + header_[k] + "': not a number: '" + s + "'");
    return x;
}

Date CsvReader::date(std::size_t k) const {
    try {
        return parse_date(fields_[k]);
    } catch (const ValidationError& e) {
        throw ValidationError(name_ + " line " + std::to_string(line_) + ", column '" + header_[k] + "': " + e.what());
    }
}

bool CsvReader::flag(std::size_t k) const {
    const std::string& s = fields_[k];
    if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False" || s.empty()) return false;
    throw ValidationError(name_ + " line " + std::to_string(line_) + ", column '" + header_[k] + "': expected a boolean, got '" + s + "'");
}

// ---------------------------------------------------------------------------

CsvWriter::CsvWriter(const fs::path& path, std::initializer_list<std::string_view> header)
    : CsvWriter(path, std::vector<std::string>(header.begin(), header.end())) {}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header) : name_(path.string()), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write " + name_);
    columns_ = header.size();
    for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
    out_ << '\n';
}

CsvWriter::~CsvWriter() {
    if (out_.is_open()) out_.close();
}

void CsvWriter::sep() {
    if (in_row_++) out_ << ',';
}

CsvWriter& CsvWriter::operator<<(double x) {
    sep();
    out_ << format_double(x);
    return *this;
}

CsvWriter& CsvWriter::operator<<(std::string_view s) {
    sep();
    if (s.find_first_of(",\"\n") == std::string_view::npos) {
        out_ << s;
    } else {
        out_ << '"';
        for (char c : s) {
            if (c == '"') out_ << '"';
            out_ << c;
        }
        out_ << '"';
    }
    return *this;
}

CsvWriter& CsvWriter::operator<<(Date d) {
    sep();
    out_ << format_date(d);
    return *this;
}

CsvWriter& CsvWriter::operator<<(long long n) {
    sep();
    out_ << n;
    return *this;
}

void CsvWriter::end_row() {
    if (in_row_ != columns_)
        throw Error(name_ + ": row has " + std::to_string(in_row_) + " fields, header has " + std::to_string(columns_), 1);
    out_ << '\n';
    in_row_ = 0;
}

void CsvWriter::close() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + name_);
    out_.close();
}

// ---------------------------------------------------------------------------

MarketPanel read_panel(const fs::path& dir, const PanelWindows& windows, const PanelFilter& filter) {
    if (filter.min_aum < 0.0 || filter.top_liquidity < 0) throw ValidationError("panel filter values must be non-negative");
    std::vector<SecurityRow> securities;
    std::vector<FundRow> funds;
    {
        CsvReader r(dir / "securities.csv");
        const auto c_date = r.column("date"), c_id = r.column("security_id"), c_ret = r.column("ret"), c_close = r.column("close"),
                   c_vol = r.column("volume_usd"), c_cap = r.column("market_cap"), c_sh = r.column("shares_outstanding");
        while (r.next()) {
            if (r.field(c_id).empty()) throw ValidationError(r.path() + " line " + std::to_string(r.line()) + ": empty security_id");
            securities.push_back(SecurityRow{r.date(c_date), r.field(c_id), r.number(c_ret), r.number(c_close), r.number(c_vol),
                                             r.number(c_cap), r.number(c_sh)});
        }
    }
    {
        CsvReader r(dir / "funds.csv");
        const auto c_date = r.column("date"), c_id = r.column("fund_id"), c_nav = r.column("nav_price"),
                   c_sh = r.column("shares_outstanding"), c_act = r.column("is_active");
        while (r.next()) {
            if (r.field(c_id).empty()) throw ValidationError(r.path() + " line " + std::to_string(r.line()) + ": empty fund_id");
            funds.push_back(FundRow{r.date(c_date), r.field(c_id), r.number(c_nav), r.number(c_sh), r.flag(c_act)});
        }
    }

    // Universe selection.
    std::unordered_set<std::string> drop_funds, keep_securities;
    const bool sec_filter = filter.top_liquidity > 0;
    if (filter.active_only || filter.min_aum > 0.0) {
        std::map<std::string, std::vector<double>> aum;
        std::map<std::string, bool> active;
        for (const auto& f : funds) {
            aum[f.fund_id].push_back(f.nav_price * f.shares_outstanding);
            active[f.fund_id] = active[f.fund_id] || f.is_active;
        }
        for (auto& [id, xs] : aum) {
            std::vector<double> ok;
            for (double x : xs)
                if (std::isfinite(x)) ok.push_back(x);
            const double med = ok.empty() ? kMissing : quantile(ok, 0.5);
            if ((filter.active_only && !active[id]) || (filter.min_aum > 0.0 && !(med >= filter.min_aum))) drop_funds.insert(id);
        }
    }
    if (sec_filter) {
        std::map<std::string, std::pair<double, int>> vol;
        for (const auto& s : securities)
            if (std::isfinite(s.volume_usd)) {
                auto& v = vol[s.security_id];
                v.first += s.volume_usd;
                ++v.second;
            }
        std::vector<std::pair<double, std::string>> ranked;
        for (const auto& [id, v] : vol) ranked.emplace_back(v.first / v.second, id);
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t k = 0; k < ranked.size() && k < static_cast<std::size_t>(filter.top_liquidity); ++k) keep_securities.insert(ranked[k].second);
    }

    PanelBuilder b;
    for (auto& s : securities)
        if (!sec_filter || keep_securities.count(s.security_id)) b.add(std::move(s));
    for (auto& f : funds)
        if (!drop_funds.count(f.fund_id)) b.add(std::move(f));
    securities.clear();
    funds.clear();
    {
        CsvReader r(dir / "holdings.csv");
        const auto c_date = r.column("date"), c_f = r.column("fund_id"), c_s = r.column("security_id"), c_pos = r.column("dollar_position");
        HoldingRow row;
        while (r.next()) {
            row.date = r.date(c_date);
            row.fund_id = r.field(c_f);
            row.security_id = r.field(c_s);
            row.dollar_position = r.number(c_pos);
            if (is_missing(row.dollar_position))
                throw ValidationError(r.path() + " line " + std::to_string(r.line()) + ": missing dollar_position");
            if (drop_funds.count(row.fund_id) || (sec_filter && !keep_securities.count(row.security_id))) continue;
            b.add(row);
        }
    }
    return std::move(b).build(windows);
}

void write_panel(const fs::path& dir, const MarketPanel& panel) {
    ensure_directory(dir);
    const auto dates = panel.dates();
    {
        CsvWriter w(dir / "securities.csv", {"date", "security_id", "ret", "close", "volume_usd", "market_cap", "shares_outstanding"});
        for (Index t = 0; t < panel.n_days(); ++t)
            for (Index s = 0; s < panel.n_securities(); ++s) {
                const auto& d = panel.security(s, t);
                if (!d.present) continue;
                w << dates[t] << panel.security_ids()[s] << d.ret << d.close << d.volume_usd << d.market_cap << d.shares_outstanding;
                w.end_row();
            }
        w.close();
    }
    {
        CsvWriter w(dir / "funds.csv", {"date", "fund_id", "nav_price", "shares_outstanding", "is_active"});
        for (Index t = 0; t < panel.n_days(); ++t)
            for (Index f = 0; f < panel.n_funds(); ++f) {
                const auto& d = panel.fund(f, t);
                if (!d.present) continue;
                w << dates[t] << panel.fund_ids()[f] << d.nav_price << d.shares_outstanding << (d.is_active ? 1 : 0);
                w.end_row();
            }
        w.close();
    }
    {
        CsvWriter w(dir / "holdings.csv", {"date", "fund_id", "security_id", "dollar_position"});
        for (Index t = 0; t < panel.n_days(); ++t)
            for (Index f = 0; f < panel.n_funds(); ++f) {
                if (panel.fund(f, t).holdings_carried) continue;
                for (const auto& p : panel.holdings(f, t)) {
                    w << dates[t] << panel.fund_ids()[f] << panel.security_ids()[p.security] << p.dollar_position;
                    w.end_row();
                }
            }
        w.close();
    }
}

void write_sim_output(const fs::path& dir, const SimOutput& out) {
    ensure_directory(dir);
    const Index T = out.n_days();
    const auto N = out.security_ids.size();
    const auto F = out.fund_ids.size();
    {
        CsvWriter w(dir / "securities.csv", {"date", "security_id", "ret", "close", "volume_usd", "market_cap", "shares_outstanding"});
        for (Index t = 0; t < T; ++t)
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t k = n * static_cast<std::size_t>(T) + static_cast<std::size_t>(t);
                w << out.calendar[t] << out.security_ids[n] << out.sec_ret[k] << out.sec_close[k] << out.sec_volume[k] << out.sec_market_cap[k]
                  << out.sec_shares[k];
                w.end_row();
            }
        w.close();
    }
    {
        CsvWriter w(dir / "funds.csv", {"date", "fund_id", "nav_price", "shares_outstanding", "is_active"});
        for (Index t = 0; t < T; ++t)
            for (std::size_t i = 0; i < F; ++i) {
                const std::size_t k = i * static_cast<std::size_t>(T) + static_cast<std::size_t>(t);
                w << out.calendar[t] << out.fund_ids[i] << out.nav[k] << out.fund_shares[k] << (out.active[i] ? 1 : 0);
                w.end_row();
            }
        w.close();
    }
    {
        CsvWriter w(dir / "holdings.csv", {"date", "fund_id", "security_id", "dollar_position"});
        for (Index t = 0; t < T; ++t)
            for (std::size_t i = 0; i < F; ++i)
                for (std::size_t m = 0; m < out.members[i].size(); ++m) {
                    w << out.calendar[t] << out.fund_ids[i] << out.security_ids[static_cast<std::size_t>(out.members[i][m])]
                      << out.positions[i][m * static_cast<std::size_t>(T) + static_cast<std::size_t>(t)];
                    w.end_row();
                }
        w.close();
    }
    {
        CsvWriter w(dir / "truth.csv", {"date", "fund_id", "fundamental_return", "impact_return", "flow_chasing", "flow_noise"});
        for (Index t = 0; t < T; ++t)
            for (std::size_t i = 0; i < F; ++i) {
                const auto& r = out.truth.at(static_cast<Index>(i), t);
                w << out.calendar[t] << out.fund_ids[i] << r.fundamental_return << r.impact_return << r.flow_chasing << r.flow_noise;
                w.end_row();
            }
        w.close();
    }
    std::ofstream cfg(dir / "sim.cfg", std::ios::binary);
    if (!cfg) throw IoError("cannot write " + (dir / "sim.cfg").string());
    write_sim_config(cfg, out.config);
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json number(double x) {
    if (!std::isfinite(x)) return nullptr;
    return x;
}

}  // namespace

nlohmann::ordered_json fit_json(const RegressionFit& fit) {
    nlohmann::ordered_json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "regression";
    doc["n_obs"] = fit.n_obs;
    doc["r2"] = number(fit.r2);
    doc["within_r2"] = number(fit.within_r2);
    doc["ssr"] = number(fit.ssr);
    doc["n_clusters"] = fit.n_clusters;
    doc["fe_iterations"] = fit.fe_iterations;
    doc["covariance_clipped"] = fit.covariance_clipped;
    auto& coefs = doc["coefficients"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        coefs.push_back({{"name", fit.names[k]}, {"estimate", number(fit.coef[i])}, {"se", number(fit.se[i])}, {"t", number(fit.t[i])}});
    }
    return doc;
}

nlohmann::ordered_json kernel_json(const KernelFit& fit) {
    nlohmann::ordered_json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "exp_decay_kernel";
    doc["n_obs"] = fit.n_obs;
    doc["ssr"] = number(fit.ssr);
    doc["iterations"] = fit.iterations;
    doc["converged"] = fit.converged;
    doc["orthogonality"] = number(fit.orthogonality);
    doc["covariance_clipped"] = fit.covariance_clipped;
    auto& coefs = doc["coefficients"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const double se = fit.se[i];
        coefs.push_back({{"name", fit.names[k]},
                         {"estimate", number(fit.params[i])},
                         {"se", number(se)},
                         {"t", number(se > 0 ? fit.params[i] / se : kMissing)}});
    }
    auto& starts = doc["starts"] = nlohmann::ordered_json::array();
    for (const auto& s : fit.starts)
        starts.push_back({{"lambda_start", number(s.lambda_start)},
                          {"ssr", number(s.ssr)},
                          {"iterations", s.iterations},
                          {"converged", s.converged},
                          {"note", s.note}});
    return doc;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace flowlab
