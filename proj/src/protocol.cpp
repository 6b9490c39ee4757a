#include "pwcare/protocol.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "embedded_catalogs.hpp"
#include "pwcare/error.hpp"

namespace pwcare::protocol {

std::string_view to_string(Language lang) noexcept {
  switch (lang) {
    case Language::En: return "en";
    case Language::Ku: return "ku";
    case Language::Ar: return "ar";
  }
  return "en";
}

std::optional<Language> language_from(std::string_view text) noexcept {
  if (text == "en") return Language::En;
  if (text == "ku") return Language::Ku;
  if (text == "ar") return Language::Ar;
  return std::nullopt;
}

std::string_view to_string(MessageKind kind) noexcept {
  switch (kind) {
    case MessageKind::Reg: return "REG";
    case MessageKind::Help: return "HELP";
    case MessageKind::Chg: return "CHG";
  }
  return "REG";
}

bool is_valid_utf8(std::string_view text) noexcept {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > text.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates, beyond U+10FFFF.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += len;
  }
  return true;
}

bool is_valid_phone(std::string_view phone) noexcept {
  if (!phone.empty() && phone.front() == '+') phone.remove_prefix(1);
  if (phone.size() < 6 || phone.size() > 15) return false;
  for (char c : phone) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

std::string format_degrees(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split_pipes(std::string_view raw) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t bar = raw.find('|', start);
    if (bar == std::string_view::npos) {
      out.emplace_back(raw.substr(start));
      return out;
    }
    out.emplace_back(raw.substr(start, bar - start));
    start = bar + 1;
  }
}

bool has_control_chars(std::string_view text) noexcept {
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u == 0x7F) return true;
  }
  return false;
}

bool is_valid_patient_id(std::string_view id) noexcept {
  if (id.empty() || id.size() > 32) return false;
  for (char c : id) {
    const bool ok = (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                    c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidField, what); }

void expect_fields(const std::vector<std::string>& tokens, std::size_t want, std::string_view kind) {
  if (tokens.size() != want + 1) {
    throw Error(ErrorCode::FieldCountMismatch,
                std::string(kind) + " expects " + std::to_string(want) + " fields, got " +
                    std::to_string(tokens.size() - 1));
  }
}

Date require_date(std::string_view text, std::string_view field) {
  auto d = parse_date(text);
  if (!d) invalid(std::string(field) + " must be YYYY-MM-DD");
  return *d;
}

std::string require_patient_id(std::string_view text) {
  if (!is_valid_patient_id(text)) invalid("malformed patient id");
  return std::string(text);
}

void check_name(std::string_view name) {
  if (name.empty() || name.find('|') != std::string_view::npos || has_control_chars(name) ||
      !is_valid_utf8(name)) {
    invalid("name must be non-empty text without '|'");
  }
}

}  // namespace

InboundMessage parse_inbound(std::string_view raw, std::string_view sender_phone, Timestamp now) {
  if (raw.size() > kMaxPayloadBytes) {
    throw Error(ErrorCode::OversizedPayload,
                "payload is " + std::to_string(raw.size()) + " bytes, limit 160");
  }
  if (!is_valid_utf8(raw) || has_control_chars(raw)) {
    throw Error(ErrorCode::InvalidEncoding, "payload is not printable UTF-8");
  }
  if (!is_valid_phone(sender_phone)) invalid("sender phone is not a valid number");

  std::vector<std::string> tokens = split_pipes(raw);
  const std::string& kind = tokens.front();

  InboundMessage msg{std::string(sender_phone), {}, ChgPayload{}, now};
  if (kind == "REG") {
    expect_fields(tokens, 6, kind);
    check_name(tokens[1]);
    if (!is_valid_phone(tokens[2])) invalid("phone is not a valid number");
    geo::GeoPoint home = geo::validate_point(tokens[3], tokens[4]);
    Date lmp = require_date(tokens[5], "lmp");
    Language lang = Language::En;
    if (!tokens[6].empty()) {
      auto parsed = language_from(tokens[6]);
      if (!parsed) invalid("language must be one of en, ku, ar");
      lang = *parsed;
    }
    msg.body = RegPayload{tokens[1], tokens[2], home, lmp, lang};
  } else if (kind == "HELP") {
    expect_fields(tokens, 4, kind);
    std::string id = require_patient_id(tokens[1]);
    geo::GeoPoint where = geo::validate_point(tokens[2], tokens[3]);
    auto ts = parse_timestamp(tokens[4]);
    if (!ts) invalid("client timestamp must be ISO-8601");
    msg.body = HelpPayload{std::move(id), where, *ts};
  } else if (kind == "CHG") {
    expect_fields(tokens, 2, kind);
    std::string id = require_patient_id(tokens[1]);
    msg.body = ChgPayload{std::move(id), require_date(tokens[2], "preferred date")};
  } else {
    throw Error(ErrorCode::UnknownKind, "unknown message kind");
  }
  msg.fields.assign(tokens.begin() + 1, tokens.end());
  return msg;
}

std::string serialize_inbound(const Payload& body) {
  std::string out;
  if (const auto* reg = std::get_if<RegPayload>(&body)) {
    check_name(reg->name);
    if (!is_valid_phone(reg->phone)) invalid("phone is not a valid number");
    out = "REG|" + reg->name + "|" + reg->phone + "|" + format_degrees(reg->home.lat()) + "|" +
          format_degrees(reg->home.lon()) + "|" + format_date(reg->lmp) + "|" +
          std::string(to_string(reg->language));
  } else if (const auto* help = std::get_if<HelpPayload>(&body)) {
    out = "HELP|" + require_patient_id(help->patient_id) + "|" +
          format_degrees(help->location.lat()) + "|" + format_degrees(help->location.lon()) +
          "|" + format_timestamp(help->client_ts);
  } else {
    const auto& chg = std::get<ChgPayload>(body);
    out = "CHG|" + require_patient_id(chg.patient_id) + "|" + format_date(chg.preferred_date);
  }
  if (out.size() > kMaxPayloadBytes) {
    throw Error(ErrorCode::OversizedPayload,
                "serialized payload is " + std::to_string(out.size()) + " bytes, limit 160");
  }
  return out;
}

TemplateCatalog TemplateCatalog::defaults() {
  return from_tsv(embedded::kTemplatesTsv, false);
}

TemplateCatalog TemplateCatalog::from_tsv(std::string_view text, bool include_defaults) {
  TemplateCatalog catalog = include_defaults ? defaults() : TemplateCatalog{};
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      invalid("template line " + std::to_string(line_no) + ": expected 3 tab-separated columns");
    }
    auto lang = language_from(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    std::string body = line.substr(t2 + 1);
    if (!lang || t1 == 0 || body.empty()) {
      invalid("template line " + std::to_string(line_no) + ": bad id, language or empty text");
    }
    catalog.templates_[{line.substr(0, t1), *lang}] = std::move(body);
  }
  return catalog;
}

TemplateCatalog TemplateCatalog::from_file(const std::string& path, bool include_defaults) {
  std::ifstream in(path, std::ios::binary);
  if (!in) invalid("cannot read template catalog " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_tsv(buf.str(), include_defaults);
}

bool TemplateCatalog::contains(std::string_view template_id, Language lang) const {
  return templates_.count({std::string(template_id), lang}) != 0;
}

OutboundNotification TemplateCatalog::render(std::string_view recipient_phone,
                                             std::string_view template_id, Language lang,
                                             const Bindings& bindings) const {
  auto it = templates_.find({std::string(template_id), lang});
  if (it == templates_.end()) {
    throw Error(ErrorCode::MissingTemplate, "no template '" + std::string(template_id) + "' for " +
                                                std::string(to_string(lang)));
  }
  const std::string& text = it->second;
  std::string rendered;
  rendered.reserve(text.size() + 64);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find('{', pos);
    const std::size_t close = open == std::string::npos ? open : text.find('}', open);
    if (close == std::string::npos) {
      rendered.append(text, pos, std::string::npos);
      break;
    }
    rendered.append(text, pos, open - pos);
    const std::string_view name = std::string_view(text).substr(open + 1, close - open - 1);
    auto bound = bindings.find(name);
    if (bound == bindings.end()) {
      throw Error(ErrorCode::UnboundPlaceholder, "placeholder {" + std::string(name) + "} of '" +
                                                     std::string(template_id) + "' is unbound");
    }
    rendered += bound->second;
    pos = close + 1;
  }
  return OutboundNotification{std::string(recipient_phone), std::string(template_id), lang,
                              std::move(rendered)};
}

}  // namespace pwcare::protocol
