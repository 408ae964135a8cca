#pragma once

#include "flowlab/econometrics.hpp"
#include "flowlab/nlls.hpp"
#include "flowlab/panel.hpp"
#include "flowlab/simulator.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace flowlab {

// 17 significant digits; missing values become an empty field.
std::string format_double(double x);

// Line-oriented CSV reader. Quoted fields are supported; embedded newlines are not.
class CsvReader {
public:
    explicit CsvReader(const std::filesystem::path& path);

    const std::vector<std::string>& header() const { return header_; }
    // Column position; throws ValidationError naming the file and the column.
    std::size_t column(const std::string& name) const;
    std::optional<std::size_t> find_column(const std::string& name) const;

    bool next();
    const std::string& field(std::size_t k) const { return fields_[k]; }
    std::size_t size() const { return fields_.size(); }
    std::size_t line() const { return line_; }
    const std::string& path() const { return name_; }

    // Empty -> missing; anything unparsable throws ValidationError with file, line and column.
    double number(std::size_t k) const;
    Date date(std::size_t k) const;
    bool flag(std::size_t k) const;

private:
    void split(const std::string& line);
    std::string name_;
    std::ifstream in_;
    std::vector<std::string> header_;
    std::vector<std::string> fields_;
    std::size_t line_ = 0;
};

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header);
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    ~CsvWriter();

    CsvWriter& operator<<(double x);
    CsvWriter& operator<<(std::string_view s);
    CsvWriter& operator<<(const std::string& s) { return *this << std::string_view(s); }
    CsvWriter& operator<<(const char* s) { return *this << std::string_view(s); }
    CsvWriter& operator<<(Date d);
    CsvWriter& operator<<(long long n);
    CsvWriter& operator<<(int n) { return *this << static_cast<long long>(n); }
    CsvWriter& operator<<(long n) { return *this << static_cast<long long>(n); }
    CsvWriter& operator<<(std::size_t n) { return *this << static_cast<long long>(n); }
    void end_row();
    void close();

private:
    void sep();
    std::string name_;
    std::ofstream out_;
    std::size_t columns_ = 0;
    std::size_t in_row_ = 0;
};

// Universe restrictions applied while reading.
struct PanelFilter {
    bool active_only = false;   // keep funds flagged active
    double min_aum = 0.0;       // keep funds whose median AUM reaches this
    int top_liquidity = 0;      // keep the N securities with the highest mean dollar volume; 0 keeps all
};

// securities.csv, funds.csv, holdings.csv under `dir`.
MarketPanel read_panel(const std::filesystem::path& dir, const PanelWindows& windows = {}, const PanelFilter& filter = {});
void write_panel(const std::filesystem::path& dir, const MarketPanel& panel);
// The three panel files plus truth.csv and the config that produced them.
void write_sim_output(const std::filesystem::path& dir, const SimOutput& out);

// Structured fit output. Doubles are emitted in shortest round-trip form; missing is null.
inline constexpr int kSchemaVersion = 1;
nlohmann::ordered_json fit_json(const RegressionFit& fit);
nlohmann::ordered_json kernel_json(const KernelFit& fit);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

void ensure_directory(const std::filesystem::path& dir);

}  // namespace flowlab
