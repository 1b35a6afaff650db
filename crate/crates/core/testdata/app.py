print(config["API_KEY"])
