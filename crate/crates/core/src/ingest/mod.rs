//! Transaction tables, click deduplication and feature engineering.

mod clicks;
mod features;
mod tables;

pub use clicks::{dedup_clicks, dedup_history, ClickHistory, Event, UNKNOWN_CHANNEL};
pub use features::{
    build_choice_frame, build_sales_frame, build_sales_frame_with_schema, count_gifts,
    discount_ratios, is_missing_label, sku_points, DiscountRatios, FrameBuild, RatioError,
    CLUSTER_ATTRIBUTES, SALES_FEATURES,
};
pub use tables::{
    format_timestamp, parse_tables, parse_timestamp, Click, Diagnostic, MonthWindow, Order,
    ParseOptions, RawTables, Sku, TableCounts, TablePaths, User, CLICKS_FILE, CLICK_COLUMNS,
    ORDERS_FILE, ORDER_COLUMNS, SKUS_FILE, SKU_COLUMNS, USERS_FILE, USER_COLUMNS,
};
