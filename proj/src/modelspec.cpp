#include "acnet/modelspec.hpp"

#include <sstream>

#include "acnet/common.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

const char* block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::plain: return "plain";
        case BlockKind::acb: return "acb";
        case BlockKind::acb_shifted: return "acb-shifted";
    }
    return "?";
}

namespace {

[[noreturn]] void parse_error(int line_no, const std::string& msg) {
    fail_invalid("model spec line " + std::to_string(line_no) + ": " + msg);
}

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) {
        if (t[0] == '#') break;
        toks.push_back(t);
    }
    return toks;
}

int parse_int(const std::string& tok, int line_no) {
    try {
        size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        parse_error(line_no, "expected an integer, got '" + tok + "'");
    }
}

}  // namespace

ModelSpec parse_model_spec(const std::string& text) {
    ModelSpec spec;
    bool have_input = false;
    std::istringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        std::vector<std::string> toks = tokenize(line);
        if (toks.empty()) continue;
        const std::string& op = toks[0];
        if (op == "input") {
            if (have_input) parse_error(line_no, "duplicate input line");
            if (toks.size() != 4) parse_error(line_no, "input needs <c> <h> <w>");
            spec.in_c = parse_int(toks[1], line_no);
            spec.in_h = parse_int(toks[2], line_no);
            spec.in_w = parse_int(toks[3], line_no);
            have_input = true;
        } else if (op == "conv") {
            if (!have_input) parse_error(line_no, "conv before input line");
            if (toks.size() < 3) parse_error(line_no, "conv needs <filters> <kernel>");
            LayerDesc ld;
            ld.kind = LayerDesc::Kind::conv;
            ld.conv.d = parse_int(toks[1], line_no);
            const std::string& k = toks[2];
            const size_t xpos = k.find('x');
            if (xpos == std::string::npos) {
                ld.conv.kh = ld.conv.kw = parse_int(k, line_no);
            } else {
                ld.conv.kh = parse_int(k.substr(0, xpos), line_no);
                ld.conv.kw = parse_int(k.substr(xpos + 1), line_no);
            }
            ld.conv.stride = 1;
            ld.conv.pad = 0;
            for (size_t i = 3; i < toks.size(); ++i) {
                if (toks[i] == "stride" && i + 1 < toks.size())
                    ld.conv.stride = parse_int(toks[++i], line_no);
                else if (toks[i] == "pad" && i + 1 < toks.size())
                    ld.conv.pad = parse_int(toks[++i], line_no);
                else if (toks[i] == "plain")
                    ld.conv.block = BlockKind::plain;
                else if (toks[i] == "acb")
                    ld.conv.block = BlockKind::acb;
                else if (toks[i] == "acb-shifted")
                    ld.conv.block = BlockKind::acb_shifted;
                else if (toks[i] == "bias")
                    ld.conv.with_bias = true;
                else
                    parse_error(line_no, "unknown conv token '" + toks[i] + "'");
            }
            spec.layers.push_back(ld);
        } else if (op == "relu") {
            LayerDesc ld;
            ld.kind = LayerDesc::Kind::relu;
            spec.layers.push_back(ld);
        } else if (op == "maxpool") {
            if (toks.size() != 3) parse_error(line_no, "maxpool needs <k> <stride>");
            LayerDesc ld;
            ld.kind = LayerDesc::Kind::maxpool;
            ld.pool_k = parse_int(toks[1], line_no);
            ld.pool_stride = parse_int(toks[2], line_no);
            spec.layers.push_back(ld);
        } else if (op == "gap") {
            LayerDesc ld;
            ld.kind = LayerDesc::Kind::gap;
            spec.layers.push_back(ld);
        } else if (op == "linear") {
            if (toks.size() != 2) parse_error(line_no, "linear needs <classes>");
            LayerDesc ld;
            ld.kind = LayerDesc::Kind::linear;
            ld.classes = parse_int(toks[1], line_no);
            spec.layers.push_back(ld);
        } else {
            parse_error(line_no, "unknown layer '" + op + "'");
        }
    }
    if (!have_input) fail_invalid("model spec: missing input line");
    validate_model_spec(spec);
    return spec;
}

std::string format_model_spec(const ModelSpec& spec) {
    std::ostringstream out;
    out << "input " << spec.in_c << " " << spec.in_h << " " << spec.in_w << "\n";
    for (const LayerDesc& ld : spec.layers) {
        switch (ld.kind) {
            case LayerDesc::Kind::conv:
                out << "conv " << ld.conv.d << " " << ld.conv.kh << "x" << ld.conv.kw << " stride "
                    << ld.conv.stride << " pad " << ld.conv.pad << " "
                    << block_kind_name(ld.conv.block);
                if (ld.conv.with_bias) out << " bias";
                out << "\n";
                break;
            case LayerDesc::Kind::relu:
                out << "relu\n";
                break;
            case LayerDesc::Kind::maxpool:
                out << "maxpool " << ld.pool_k << " " << ld.pool_stride << "\n";
                break;
            case LayerDesc::Kind::gap:
                out << "gap\n";
                break;
            case LayerDesc::Kind::linear:
                out << "linear " << ld.classes << "\n";
                break;
        }
    }
    return out.str();
}

void validate_model_spec(const ModelSpec& spec) {
    if (spec.in_c < 1 || spec.in_h < 1 || spec.in_w < 1)
        fail_invalid("model spec: input dims must be positive");
    int h = spec.in_h, w = spec.in_w;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& ld = spec.layers[i];
        const std::string where = " (layer " + std::to_string(i) + ")";
        switch (ld.kind) {
            case LayerDesc::Kind::conv: {
                const ConvDesc& cd = ld.conv;
                if (cd.d < 1) fail_invalid("model spec: conv filter count must be positive" + where);
                if (cd.kh < 1 || cd.kw < 1 || cd.stride < 1 || cd.pad < 0)
                    fail_invalid("model spec: bad conv geometry" + where);
                if (cd.block != BlockKind::plain && !(cd.kh == 3 && cd.kw == 3 && cd.pad == 1))
                    fail_invalid("model spec: acb requires a 3x3 conv with pad 1" + where);
                const int oh = ConvGeometry::out_extent(h, cd.kh, cd.stride, cd.pad);
                const int ow = ConvGeometry::out_extent(w, cd.kw, cd.stride, cd.pad);
                if (oh < 1 || ow < 1) fail_invalid("model spec: conv output degenerates" + where);
                h = oh;
                w = ow;
                break;
            }
            case LayerDesc::Kind::relu:
                break;
            case LayerDesc::Kind::maxpool: {
                if (ld.pool_k < 1 || ld.pool_stride < 1)
                    fail_invalid("model spec: bad maxpool parameters" + where);
                const int oh = h < ld.pool_k ? 0 : (h - ld.pool_k) / ld.pool_stride + 1;
                const int ow = w < ld.pool_k ? 0 : (w - ld.pool_k) / ld.pool_stride + 1;
                if (oh < 1 || ow < 1) fail_invalid("model spec: maxpool output degenerates" + where);
                h = oh;
                w = ow;
                break;
            }
            case LayerDesc::Kind::gap:
                h = 1;
                w = 1;
                break;
            case LayerDesc::Kind::linear:
                if (ld.classes < 2) fail_invalid("model spec: linear needs >= 2 classes" + where);
                h = 1;
                w = 1;
                break;
        }
    }
}

ModelSpec override_blocks(const ModelSpec& spec, const std::string& mode) {
    ModelSpec out = spec;
    for (LayerDesc& ld : out.layers) {
        if (ld.kind != LayerDesc::Kind::conv) continue;
        if (mode == "off") {
            ld.conv.block = BlockKind::plain;
        } else if (mode == "shifted") {
            if (ld.conv.block != BlockKind::plain) ld.conv.block = BlockKind::acb_shifted;
        } else if (mode != "on") {
            fail_invalid("override_blocks: mode must be on, off or shifted");
        }
    }
    return out;
}

}  // namespace acnet
