// Command-line front end: `price` runs one configuration, `suite` runs every
// *.cfg file of a directory in sorted order.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpra/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

void write_file(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw gpra::ConfigInvalid("cannot write output file '" + path.string() + "'");
    out << text;
}

std::vector<fs::path> config_files(const fs::path &dir) {
    if (!fs::is_directory(dir)) throw gpra::ConfigInvalid("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".cfg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

int exit_code_for(const std::vector<gpra::SuiteRow> &rows) {
    int code = kExitOk;
    for (const auto &row : rows) {
        if (row.error.empty()) continue;
        if (row.config_error) return kExitConfig;
        code = kExitNumerical;
    }
    return code;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Bermudan option pricing with Gaussian process surrogates"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string price_out;
    auto *price = app.add_subcommand("price", "price a single configuration");
    price->add_option("--config", config_path, "key=value configuration file")->required();
    price->add_option("--override", overrides, "key=value setting applied after the file");
    price->add_option("--out", price_out, "CSV output path");

    std::string config_dir;
    std::string suite_out;
    int repeat = 1;
    auto *suite = app.add_subcommand("suite", "price every .cfg file of a directory");
    suite->add_option("--config-dir", config_dir, "directory of configuration files")->required();
    suite->add_option("--out", suite_out, "CSV output path")->required();
    suite->add_option("--repeat", repeat, "runs per configuration")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    std::vector<gpra::PricingConfig> configs;
    std::string out_path;
    try {
        if (price->parsed()) {
            configs.push_back(gpra::load_config(config_path, overrides));
            out_path = price_out.empty() ? configs.front().output : price_out;
            if (out_path.empty()) throw gpra::ConfigInvalid("no output path: pass --out or set out= in the config");
        } else {
            for (const auto &file : config_files(config_dir)) configs.push_back(gpra::load_config(file));
            out_path = suite_out;
        }
    } catch (const gpra::ConfigInvalid &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        const auto rows = gpra::run_suite(configs, price->parsed() ? 1 : repeat);
        write_file(out_path, gpra::format_csv(rows));
        for (const auto &row : rows) {
            if (row.error.empty()) {
                std::cout << row.config.model << ' ' << row.config.method << ' ' << row.config.payoff
                          << " d=" << row.config.d << " K=" << row.config.strike << " price=" << row.report->price
                          << " seconds=" << row.report->seconds << '\n';
            } else {
                std::cerr << (row.config_error ? "config error: " : "numerical failure: ") << row.error << '\n';
            }
        }
        return exit_code_for(rows);
    } catch (const gpra::ConfigInvalid &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}
