from core.config import DevSettings, settings as default_settings


class Service:

    def __init__(self, settings: DevSettings = default_settings):
        self.settings = settings
