#include <sstream>
#include <string>

#include <json.hpp>

#include "cvr/errors.hpp"
#include "cvr/file_io.hpp"
#include "cvr/synthetic_data.hpp"

namespace cvr {

namespace {

using nlohmann::json;

const char* label_name(Label l) {
    switch (l) {
    case Label::kPositive: return "positive";
    case Label::kNegative: return "negative";
    case Label::kIgnore: return "ignore";
    }
    return "negative";
}

Label parse_label(const std::string& s) {
    if (s == "positive") return Label::kPositive;
    if (s == "negative") return Label::kNegative;
    if (s == "ignore") return Label::kIgnore;
    throw SchemaError("unknown label '" + s + "'");
}

void put_reals(std::ostringstream& os, std::span<const double> values) {
    os << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) os << ',';
        os << format_real(values[i]);
    }
    os << ']';
}

void put_box(std::ostringstream& os, const RoiGeometry& g) {
    os << "\"x\":" << format_real(g.x) << ",\"y\":" << format_real(g.y)
       << ",\"w\":" << format_real(g.w) << ",\"h\":" << format_real(g.h);
}

void put_view(std::ostringstream& os, const std::vector<RoiCandidate>& cands,
              const std::vector<CandidateTarget>& targets) {
    os << '[';
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (i > 0) os << ',';
        os << '{';
        put_box(os, cands[i].geometry);
        os << ",\"feature\":";
        put_reals(os, cands[i].feature.span());
        os << ",\"label\":\"" << label_name(targets[i].label) << "\",\"target\":";
        put_reals(os, targets[i].regression.span());
        os << '}';
    }
    os << ']';
}

void put_gts(std::ostringstream& os, const std::vector<GroundTruthBox>& gts) {
    os << '[';
    for (std::size_t i = 0; i < gts.size(); ++i) {
        if (i > 0) os << ',';
        os << '{';
        put_box(os, gts[i].geometry);
        os << ",\"lesion\":" << gts[i].lesion << '}';
    }
    os << ']';
}

RoiGeometry get_box(const json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
            j.at("h").get<double>()};
}

void get_view(const json& arr, View view, std::vector<RoiCandidate>& cands,
              std::vector<CandidateTarget>& targets) {
    for (const auto& item : arr) {
        RoiCandidate c;
        c.geometry = get_box(item);
        c.feature = Vector(item.at("feature").get<std::vector<double>>());
        c.view = view;
        CandidateTarget t;
        t.label = parse_label(item.at("label").get<std::string>());
        t.regression = Vector(item.at("target").get<std::vector<double>>());
        cands.push_back(std::move(c));
        targets.push_back(std::move(t));
    }
}

std::vector<GroundTruthBox> get_gts(const json& arr) {
    std::vector<GroundTruthBox> out;
    for (const auto& item : arr) out.push_back({get_box(item), item.at("lesion").get<int>()});
    return out;
}

} // namespace

void write_dataset(std::span<const PairedSample> samples, const std::filesystem::path& path) {
    std::ostringstream os;
    for (const auto& s : samples) {
        os << "{\"case_id\":" << s.case_id << ",\"view1\":";
        put_view(os, s.view1, s.targets1);
        os << ",\"view2\":";
        put_view(os, s.view2, s.targets2);
        os << ",\"gt1\":";
        put_gts(os, s.gt1);
        os << ",\"gt2\":";
        put_gts(os, s.gt2);
        os << "}\n";
    }
    write_file_atomic(path, os.str());
}

std::vector<PairedSample> read_dataset(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<PairedSample> out;
    std::string line;
    std::size_t line_no = 0;
    std::size_t d_f = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        PairedSample s;
        try {
            const json rec = json::parse(line);
            s.case_id = rec.at("case_id").get<std::int64_t>();
            get_view(rec.at("view1"), View::kView1, s.view1, s.targets1);
            get_view(rec.at("view2"), View::kView2, s.view2, s.targets2);
            s.gt1 = get_gts(rec.at("gt1"));
            s.gt2 = get_gts(rec.at("gt2"));
        } catch (const json::exception& e) {
            throw SchemaError(where + ": malformed record: " + e.what());
        } catch (const SchemaError& e) {
            throw SchemaError(where + ": " + e.what());
        }
        try {
            s.validate();
        } catch (const SchemaError& e) {
            throw SchemaError(where + ": " + e.what());
        }
        const std::size_t dim = s.feature_dim();
        if (dim != 0) {
            if (d_f == 0) {
                d_f = dim;
            } else if (dim != d_f) {
                throw SchemaError(where + ": feature length " + std::to_string(dim) +
                                  " differs from earlier records (" + std::to_string(d_f) + ")");
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace cvr
