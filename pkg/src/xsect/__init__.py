"""Walk-forward cross-sectional return prediction and portfolio backtesting."""

from .market_data import (
    DataParseError,
    DataValidationError,
    MarketPanel,
    TradingCalendar,
    Universe,
    calendar_from_prices,
    load_panel,
    universe_at,
)

__version__ = "0.1.0"
