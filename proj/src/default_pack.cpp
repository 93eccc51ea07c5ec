// Built-in transaction-SMS templates: English source, Arabic target.
//
// Target merchant and supplier pools mix Latin brand names with Arabic
// script, as real Egyptian bank messages do.

#include <utility>

#include "xld/corpus.hpp"

namespace xld {
namespace {

LanguagePack english_side() {
  LanguagePack p;
  p.mean_entities = 4.0;
  p.openers = {"Dear customer ,", "Dear Client ,", "Alert :", "NBE :", "CIB :", "", ""};
  p.closers = {"Thank you for banking with us .", ".", "Call us for help ."};
  p.clauses = {
      // card-number
      "Your card ending {card-number}",
      "card no. {card-number}",
      "Debit card {card-number}",
      "using your credit card {card-number}",
      // amount, alone or with currency
      "was charged {currency} {amount}",
      "has been debited with {currency} {amount}",
      "a purchase of {amount} {currency}",
      "a transaction of {currency} {amount}",
      "you spent {currency} {amount}",
      "payment of {currency} {amount}",
      "charged {amount}",
      "amount {amount}",
      "of {amount}",
      // currency alone
      "in {currency}",
      "currency {currency}",
      // merchant
      "at {merchant}",
      "purchase at {merchant}",
      "from {merchant}",
      // supplier
      "to {supplier}",
      "bill payment to {supplier}",
      "paid to {supplier}",
      "recharge for {supplier}",
      "{supplier} bill",
      // dates and times
      "on {full-date}",
      "dated {full-date}",
      "value date {full-date}",
      "on {date}",
      "date {date}",
      "for {month}",
      "statement for {month}",
      "at {full-time}",
      "time {full-time}",
      "at {time}",
      // balance
      "Available balance {currency} {balance}",
      "Avail bal {balance} {currency}",
      "balance is {balance}",
      "Your balance : {currency} {balance}",
      // reference numbers
      "Ref {number}",
      "Ref no. {number}",
      "transaction number {number}",
  };
  p.fillers = {
      {EntityType::kAmount, {"#.##", "##.##", "###.##", "#,###.##", "##,###.##", "###", "#,###"}},
      {EntityType::kBalance, {"#,###.##", "##,###.##", "###,###.##", "###.##"}},
      {EntityType::kCurrency, {"EGP", "USD", "EUR", "LE", "GBP"}},
      {EntityType::kNumber, {"######", "########", "##########", "#####"}},
      {EntityType::kFullDate, {"{DD}/{MM}/{YYYY}", "{DD}-{MM}-{YYYY}", "{YYYY}-{MM}-{DD}"}},
      {EntityType::kDate, {"{DD}/{MM}", "{DD}-{MM}"}},
      {EntityType::kFullTime, {"{hh}:{mm}:{ss}"}},
      {EntityType::kTime, {"{hh}:{mm}"}},
      {EntityType::kCardNumber, {"####", "**####", "####", "################"}},
      {EntityType::kMonth,
       {"January", "February", "March", "April", "May", "June", "July", "August", "September",
        "October", "November", "December", "Jan", "Feb", "Mar", "Apr", "Jun", "Jul", "Aug",
        "Sep", "Oct", "Nov", "Dec"}},
      {EntityType::kMerchant,
       {"Carrefour", "Carrefour Maadi", "Spinneys", "Amazon", "Talabat", "Uber", "McDonald's",
        "Starbucks", "IKEA", "Zara", "Hyper One", "Metro Market", "Jumia", "Noon", "City Stars",
        "Costa Coffee", "KFC", "Seoudi Market"}},
      {EntityType::kSupplier,
       {"Vodafone", "Orange", "Etisalat", "WE", "Fawry", "Electricity Company", "Water Company",
        "Natural Gas", "TE Data", "Valu", "Aman"}},
  };
  return p;
}

LanguagePack arabic_side() {
  LanguagePack p;
  p.mean_entities = 4.0;
  p.openers = {"عميلنا العزيز ،", "عزيزي العميل ،", "تنبيه :", "", ""};
  p.closers = {"شكرا لتعاملكم معنا .", ".", "للاستفسار اتصل بنا ."};
  p.clauses = {
      "بطاقتك المنتهية بـ {card-number}",
      "بطاقة رقم {card-number}",
      "البطاقة {card-number}",
      "تم خصم {amount} {currency}",
      "بمبلغ {amount} {currency}",
      "عملية شراء بقيمة {amount} {currency}",
      "تم سحب {currency} {amount}",
      "مبلغ {amount}",
      "بقيمة {amount}",
      "بعملة {currency}",
      "من {merchant}",
      "لدى {merchant}",
      "في {merchant}",
      "لصالح {supplier}",
      "سداد فاتورة {supplier}",
      "تحويل إلى {supplier}",
      "بتاريخ {full-date}",
      "يوم {full-date}",
      "بتاريخ {date}",
      "يوم {date}",
      "في {date}",
      "لشهر {month}",
      "عن شهر {month}",
      "الساعة {full-time}",
      "الساعة {time}",
      "في تمام {time}",
      "الرصيد المتاح {balance} {currency}",
      "رصيدك الحالي {balance}",
      "الرصيد {currency} {balance}",
      "رقم العملية {number}",
      "مرجع {number}",
      "رقم المرجع {number}",
  };
  p.fillers = {
      {EntityType::kAmount, {"#.##", "##.##", "###.##", "#,###.##", "##,###.##", "###", "#,###"}},
      {EntityType::kBalance, {"#,###.##", "##,###.##", "###,###.##", "###.##"}},
      {EntityType::kCurrency, {"جنيه", "ج.م", "EGP", "دولار", "يورو", "USD"}},
      {EntityType::kNumber, {"######", "########", "##########", "#####"}},
      {EntityType::kFullDate, {"{DD}/{MM}/{YYYY}", "{DD}-{MM}-{YYYY}"}},
      {EntityType::kDate, {"{DD}/{MM}", "{DD}-{MM}"}},
      {EntityType::kFullTime, {"{hh}:{mm}:{ss}"}},
      {EntityType::kTime, {"{hh}:{mm}"}},
      {EntityType::kCardNumber, {"####", "**####", "####", "################"}},
      {EntityType::kMonth,
       {"يناير", "فبراير", "مارس", "أبريل", "مايو", "يونيو", "يوليو", "أغسطس", "سبتمبر", "أكتوبر",
        "نوفمبر", "ديسمبر"}},
      {EntityType::kMerchant,
       {"Carrefour", "كارفور", "Spinneys", "سبينيز", "Amazon", "أمازون", "Talabat", "طلبات",
        "Uber", "أوبر", "IKEA", "هايبر وان", "مترو ماركت", "Jumia", "جوميا", "Noon", "نون"}},
      {EntityType::kSupplier,
       {"Vodafone", "فودافون", "Orange", "أورنج", "Etisalat", "اتصالات", "WE", "وي", "Fawry",
        "فوري", "شركة الكهرباء", "شركة المياه", "الغاز الطبيعي"}},
  };
  return p;
}

// (source word, target candidates). Every target candidate pivots back to
// the source word unless it appears earlier under another source word.
const std::vector<std::pair<std::string, std::vector<std::string>>>& lexicon_pairs() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> pairs = {
      // message scaffolding
      {"was", {"تم"}},
      {"debited", {"خصم", "سحب"}},
      {"withdrawn", {"سحب", "خصم"}},
      {"amount", {"بمبلغ", "بقيمة", "مبلغ"}},
      {"transaction", {"عملية", "معاملة", "العملية"}},
      {"purchase", {"شراء"}},
      {"from", {"من"}},
      {"at", {"لدى", "في"}},
      {"in", {"في"}},
      {"to", {"لصالح", "إلى"}},
      {"bill", {"فاتورة"}},
      {"payment", {"سداد", "دفع"}},
      {"transfer", {"تحويل"}},
      {"on", {"بتاريخ", "يوم"}},
      {"day", {"يوم"}},
      {"for", {"لشهر", "عن"}},
      {"month", {"شهر"}},
      {"time", {"الساعة", "وقت"}},
      {"exactly", {"تمام"}},
      {"balance", {"الرصيد", "رصيدك"}},
      {"available", {"المتاح"}},
      {"current", {"الحالي"}},
      {"number", {"رقم"}},
      {"reference", {"مرجع", "المرجع"}},
      {"card", {"بطاقتك", "بطاقة", "البطاقة"}},
      {"ending", {"المنتهية"}},
      {"with", {"بـ"}},
      {"currency", {"بعملة"}},
      {"customer", {"عميلنا", "العميل"}},
      {"dear", {"العزيز", "عزيزي"}},
      {",", {"،"}},
      {"alert", {"تنبيه"}},
      {":", {":"}},
      {".", {"."}},
      {"thanks", {"شكرا"}},
      {"banking", {"لتعاملكم"}},
      {"us", {"معنا", "بنا"}},
      {"inquiries", {"للاستفسار"}},
      {"call", {"اتصل"}},
      // currencies
      {"EGP", {"جنيه", "ج.م", "EGP"}},
      {"LE", {"جنيه"}},
      {"USD", {"دولار", "USD"}},
      {"EUR", {"يورو"}},
      {"GBP", {"استرليني"}},
      // months
      {"January", {"يناير"}},
      {"February", {"فبراير"}},
      {"March", {"مارس"}},
      {"April", {"أبريل"}},
      {"May", {"مايو"}},
      {"June", {"يونيو"}},
      {"July", {"يوليو"}},
      {"August", {"أغسطس"}},
      {"September", {"سبتمبر"}},
      {"October", {"أكتوبر"}},
      {"November", {"نوفمبر"}},
      {"December", {"ديسمبر"}},
      {"Jan", {"يناير"}},
      {"Feb", {"فبراير"}},
      {"Mar", {"مارس"}},
      {"Apr", {"أبريل"}},
      {"Jun", {"يونيو"}},
      {"Jul", {"يوليو"}},
      {"Aug", {"أغسطس"}},
      {"Sep", {"سبتمبر"}},
      {"Oct", {"أكتوبر"}},
      {"Nov", {"نوفمبر"}},
      {"Dec", {"ديسمبر"}},
      // merchants
      {"Carrefour", {"Carrefour", "كارفور"}},
      {"Maadi", {"المعادي"}},
      {"Spinneys", {"Spinneys", "سبينيز"}},
      {"Amazon", {"Amazon", "أمازون"}},
      {"Talabat", {"Talabat", "طلبات"}},
      {"Uber", {"Uber", "أوبر"}},
      {"McDonald's", {"ماكدونالدز"}},
      {"Starbucks", {"ستاربكس"}},
      {"IKEA", {"IKEA", "ايكيا"}},
      {"Zara", {"زارا"}},
      {"Hyper", {"هايبر"}},
      {"One", {"وان"}},
      {"Metro", {"مترو"}},
      {"Market", {"ماركت"}},
      {"Jumia", {"Jumia", "جوميا"}},
      {"Noon", {"Noon", "نون"}},
      {"City", {"سيتي"}},
      {"Stars", {"ستارز"}},
      {"Costa", {"كوستا"}},
      {"Coffee", {"كافيه"}},
      {"KFC", {"كنتاكي"}},
      {"Seoudi", {"سعودي"}},
      // suppliers
      {"Vodafone", {"Vodafone", "فودافون"}},
      {"Orange", {"Orange", "أورنج"}},
      {"Etisalat", {"Etisalat", "اتصالات"}},
      {"WE", {"WE", "وي"}},
      {"Fawry", {"Fawry", "فوري"}},
      {"Electricity", {"الكهرباء"}},
      {"Company", {"شركة"}},
      {"Water", {"المياه"}},
      {"Natural", {"الطبيعي"}},
      {"Gas", {"الغاز"}},
      {"TE", {"تي"}},
      {"Data", {"داتا"}},
      {"Valu", {"فاليو"}},
      {"Aman", {"أمان"}},
  };
  return pairs;
}

Lexicon build_lexicon() {
  Lexicon lex;
  for (const auto& [source, targets] : lexicon_pairs()) {
    lex.source_to_target[source] = targets;
    for (const auto& t : targets) lex.target_to_source.try_emplace(t, source);
  }
  return lex;
}

}  // namespace

TemplatePack default_template_pack() {
  TemplatePack pack;
  pack.source = english_side();
  pack.target = arabic_side();
  pack.lexicon = build_lexicon();
  return pack;
}

}  // namespace xld
