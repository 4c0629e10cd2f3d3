// config tests added with the config module
