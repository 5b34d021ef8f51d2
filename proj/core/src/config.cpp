// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/config.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace risloc {

namespace {

std::string trim(const std::string &s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos)
        return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string &key, const std::string &value) {
    const std::string v = trim(value);
    char *end = nullptr;
    const double parsed = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || !std::isfinite(parsed))
        throw ValidationError("config key '" + key + "': expected a finite number, got '" + value + "'");
    return parsed;
}

int parse_int(const std::string &key, const std::string &value) {
    const double d = parse_double(key, value);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
        throw ValidationError("config key '" + key + "': expected an integer, got '" + value + "'");
    return i;
}

std::uint64_t parse_u64(const std::string &key, const std::string &value) {
    const std::string v = trim(value);
    char *end = nullptr;
    const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ValidationError("config key '" + key + "': expected an unsigned integer, got '" + value + "'");
    return parsed;
}

bool parse_bool(const std::string &key, const std::string &value) {
    const std::string v = trim(value);
    if (v == "true" || v == "on" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "off" || v == "0" || v == "no")
        return false;
    throw ValidationError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<double> parse_list(const std::string &key, const std::string &value) {
    std::string v = value;
    for (auto &c : v)
        if (c == ',')
            c = ' ';
    std::istringstream iss(v);
    std::vector<double> out;
    std::string tok;
    while (iss >> tok)
        out.push_back(parse_double(key, tok));
    if (out.empty())
        throw ValidationError("config key '" + key + "': expected a list of numbers");
    return out;
}

Vec3 parse_vec3(const std::string &key, const std::string &value) {
    const auto list = parse_list(key, value);
    if (list.size() != 3)
        throw ValidationError("config key '" + key + "': expected exactly three numbers");
    return {list[0], list[1], list[2]};
}

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

unsigned parse_stages(const std::string &key, const std::string &value) {
    std::string v = value;
    for (auto &c : v)
        if (c == ',')
            c = ' ';
    std::istringstream iss(v);
    unsigned mask = 0;
    std::string tok;
    while (iss >> tok) {
        if (tok == "grid")
            mask |= kStageGrid;
        else if (tok == "ref_pos")
            mask |= kStageRefPos;
        else if (tok == "ref_vel")
            mask |= kStageRefVel;
        else if (tok == "full")
            mask |= kStageFull;
        else
            throw ValidationError("config key '" + key + "': unknown stage '" + tok + "'");
    }
    if (mask == 0)
        throw ValidationError("config key '" + key + "': no stages given");
    return mask;
}

std::string stages_to_string(unsigned mask) {
    std::string out;
    const auto append = [&](const char *name) {
        if (!out.empty())
            out += ' ';
        out += name;
    };
    if (mask & kStageGrid)
        append("grid");
    if (mask & kStageRefPos)
        append("ref_pos");
    if (mask & kStageRefVel)
        append("ref_vel");
    if (mask & kStageFull)
        append("full");
    return out;
}

} // namespace

ConfigMap parse_config_text(std::istream &in) {
    ConfigMap map;
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos)
            line = line.substr(0, comment);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ParseError("config line " + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ParseError("config line " + std::to_string(line_no) + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError("config line " + std::to_string(line_no) + ": empty key");
        if (section.empty())
            throw ParseError("config line " + std::to_string(line_no) + ": key outside any [section]");
        map[section + "." + key] = value;
    }
    return map;
}

ConfigMap parse_config_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open config file '" + path + "'");
    return parse_config_text(in);
}

void apply_override(ConfigMap &map, const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ValidationError("override '" + assignment + "': expected section.key=value");
    const std::string key = trim(assignment.substr(0, eq));
    if (key.find('.') == std::string::npos)
        throw ValidationError("override '" + assignment + "': key must be section.key");
    map[key] = trim(assignment.substr(eq + 1));
}

ExperimentConfig experiment_from_map(const ConfigMap &map) {
    ExperimentConfig cfg = default_experiment();
    for (const auto &[key, value] : map) {
        if (key == "rf.carrier_freq_hz")
            cfg.scenario.carrier_freq = parse_double(key, value);
        else if (key == "rf.bandwidth_hz")
            cfg.scenario.bandwidth = parse_double(key, value);
        else if (key == "rf.symbol_period_s")
            cfg.scenario.symbol_period = parse_double(key, value);
        else if (key == "rf.tx_power_dbm")
            cfg.scenario.tx_power = dbm_to_watt(parse_double(key, value));
        else if (key == "rf.noise_psd_dbm_per_hz")
            cfg.scenario.noise_psd = dbm_to_watt(parse_double(key, value));
        else if (key == "rf.noise_figure_db")
            cfg.scenario.noise_figure = db_to_linear(parse_double(key, value));
        else if (key == "rf.tx_gain_db")
            cfg.scenario.tx_gain = db_to_linear(parse_double(key, value));
        else if (key == "rf.rx_gain_db")
            cfg.scenario.rx_gain = db_to_linear(parse_double(key, value));
        else if (key == "rf.global_phase_rad")
            cfg.scenario.global_phase = parse_double(key, value);
        else if (key == "ris.rows")
            cfg.scenario.ris_rows = parse_int(key, value);
        else if (key == "ris.cols")
            cfg.scenario.ris_cols = parse_int(key, value);
        else if (key == "ris.spacing_wavelengths")
            cfg.scenario.ris_spacing_wavelengths = parse_double(key, value);
        else if (key == "scenario.bs_position_m")
            cfg.scenario.bs_position = parse_vec3(key, value);
        else if (key == "scenario.ue_direction")
            cfg.scenario.ue_direction = parse_vec3(key, value);
        else if (key == "scenario.rho_m")
            cfg.scenario.rho = parse_double(key, value);
        else if (key == "scenario.speed_mps")
            cfg.scenario.speed = parse_double(key, value);
        else if (key == "scenario.num_pilots") {
            cfg.scenario.num_pilots = parse_int(key, value);
            if (cfg.scenario.num_pilots < 3)
                throw ValidationError("config key '" + key + "': closed-form refinements need at least 3 pilots");
        } else if (key == "scenario.rician_k") {
            const double k = parse_double(key, value);
            if (k <= 0.0)
                throw ValidationError("config key '" + key + "': rician_k must be positive");
            cfg.scenario.rician_k = k;
        } else if (key == "scenario.noise")
            cfg.scenario.noise_enabled = parse_bool(key, value);
        else if (key == "scenario.gain_offset_db")
            cfg.scenario.gain_offset_db = parse_double(key, value);
        else if (key == "grid.n_theta")
            cfg.grid.n_theta = parse_int(key, value);
        else if (key == "grid.n_phi")
            cfg.grid.n_phi = parse_int(key, value);
        else if (key == "grid.n_rho")
            cfg.grid.n_rho = parse_int(key, value);
        else if (key == "grid.rho_max_m")
            cfg.grid.rho_max = parse_double(key, value);
        else if (key == "conv.objective_tolerance")
            cfg.conv.objective_tolerance = parse_double(key, value);
        else if (key == "conv.max_grid_iterations")
            cfg.conv.max_grid_iterations = parse_int(key, value);
        else if (key == "conv.max_refinement_iterations")
            cfg.conv.max_refinement_iterations = parse_int(key, value);
        else if (key == "conv.max_outer_iterations")
            cfg.conv.max_outer_iterations = parse_int(key, value);
        else if (key == "conv.max_descent_iterations")
            cfg.conv.max_descent_iterations = parse_int(key, value);
        else if (key == "conv.relinearize")
            cfg.conv.relinearize = parse_bool(key, value);
        else if (key == "experiment.axis") {
            const std::string v = trim(value);
            if (v == "distance")
                cfg.axis = SweepAxis::Distance;
            else if (v == "speed")
                cfg.axis = SweepAxis::Speed;
            else if (v == "rician_k")
                cfg.axis = SweepAxis::RicianK;
            else if (v == "snr_offset_db")
                cfg.axis = SweepAxis::SnrOffsetDb;
            else
                throw ValidationError("config key '" + key + "': unknown sweep axis '" + v + "'");
        } else if (key == "experiment.trials")
            cfg.trials = parse_int(key, value);
        else if (key == "experiment.sweep_values")
            cfg.values = parse_list(key, value);
        else if (key == "experiment.stages")
            cfg.stages = parse_stages(key, value);
        else if (key == "experiment.seed")
            cfg.master_seed = parse_u64(key, value);
        else if (key == "experiment.threads")
            cfg.threads = parse_int(key, value);
        else if (key == "experiment.per_trial_profiles")
            cfg.per_trial_profiles = parse_bool(key, value);
        else
            throw ValidationError("unknown config key '" + key + "'");
    }
    return cfg;
}

ExperimentConfig default_experiment() {
    ExperimentConfig cfg;
    cfg.values = {1.0, 2.0, 4.0, 6.0, 8.0, 10.0};
    return cfg;
}

std::string canonical_config(const ExperimentConfig &cfg) {
    ConfigMap map;
    map["rf.carrier_freq_hz"] = format_double(cfg.scenario.carrier_freq);
    map["rf.bandwidth_hz"] = format_double(cfg.scenario.bandwidth);
    if (cfg.scenario.symbol_period)
        map["rf.symbol_period_s"] = format_double(*cfg.scenario.symbol_period);
    map["rf.tx_power_dbm"] = format_double(watt_to_dbm(cfg.scenario.tx_power));
    map["rf.noise_psd_dbm_per_hz"] = format_double(watt_to_dbm(cfg.scenario.noise_psd));
    map["rf.noise_figure_db"] = format_double(linear_to_db(cfg.scenario.noise_figure));
    map["rf.tx_gain_db"] = format_double(linear_to_db(cfg.scenario.tx_gain));
    map["rf.rx_gain_db"] = format_double(linear_to_db(cfg.scenario.rx_gain));
    map["rf.global_phase_rad"] = format_double(cfg.scenario.global_phase);
    map["ris.rows"] = std::to_string(cfg.scenario.ris_rows);
    map["ris.cols"] = std::to_string(cfg.scenario.ris_cols);
    map["ris.spacing_wavelengths"] = format_double(cfg.scenario.ris_spacing_wavelengths);
    map["scenario.bs_position_m"] = format_double(cfg.scenario.bs_position.x) + " " +
                                    format_double(cfg.scenario.bs_position.y) + " " +
                                    format_double(cfg.scenario.bs_position.z);
    map["scenario.ue_direction"] = format_double(cfg.scenario.ue_direction.x) + " " +
                                   format_double(cfg.scenario.ue_direction.y) + " " +
                                   format_double(cfg.scenario.ue_direction.z);
    map["scenario.rho_m"] = format_double(cfg.scenario.rho);
    map["scenario.speed_mps"] = format_double(cfg.scenario.speed);
    map["scenario.num_pilots"] = std::to_string(cfg.scenario.num_pilots);
    if (cfg.scenario.rician_k)
        map["scenario.rician_k"] = format_double(*cfg.scenario.rician_k);
    map["scenario.noise"] = cfg.scenario.noise_enabled ? "on" : "off";
    map["scenario.gain_offset_db"] = format_double(cfg.scenario.gain_offset_db);
    map["grid.n_theta"] = std::to_string(cfg.grid.n_theta);
    map["grid.n_phi"] = std::to_string(cfg.grid.n_phi);
    map["grid.n_rho"] = std::to_string(cfg.grid.n_rho);
    map["grid.rho_max_m"] = format_double(cfg.grid.rho_max);
    map["conv.objective_tolerance"] = format_double(cfg.conv.objective_tolerance);
    map["conv.max_grid_iterations"] = std::to_string(cfg.conv.max_grid_iterations);
    map["conv.max_refinement_iterations"] = std::to_string(cfg.conv.max_refinement_iterations);
    map["conv.max_outer_iterations"] = std::to_string(cfg.conv.max_outer_iterations);
    map["conv.max_descent_iterations"] = std::to_string(cfg.conv.max_descent_iterations);
    map["conv.relinearize"] = cfg.conv.relinearize ? "true" : "false";
    map["experiment.axis"] = axis_name(cfg.axis);
    std::string values;
    for (double v : cfg.values) {
        if (!values.empty())
            values += ' ';
        values += format_double(v);
    }
    map["experiment.sweep_values"] = values;
    map["experiment.trials"] = std::to_string(cfg.trials);
    map["experiment.seed"] = std::to_string(cfg.master_seed);
    map["experiment.stages"] = stages_to_string(cfg.stages);
    map["experiment.threads"] = std::to_string(cfg.threads);
    map["experiment.per_trial_profiles"] = cfg.per_trial_profiles ? "true" : "false";

    std::string out;
    for (const auto &[key, value] : map)
        out += key + " = " + value + "\n";
    return out;
}

std::string config_hash(const ExperimentConfig &cfg) {
    const std::string text = canonical_config(cfg);
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

} // namespace risloc
